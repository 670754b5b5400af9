//! Pose trace files and accuracy metrics against ground truth.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{wrap_difference, PoseState};
use crate::scalar::{to_f64, Real};
use crate::tracker::TrackStatus;

pub const POSE_CSV_HEADER: [&str; 8] = ["frame", "tx", "ty", "s", "rx", "ry", "rz", "alpha"];

/// One row of a pose CSV. Velocities are not serialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub frame: u64,
    pub pose: PoseState<T>,
    pub status: Option<TrackStatus>,
}

/// Writes `frame,tx,ty,s,rx,ry,rz,alpha`, plus a `status` column when any
/// row carries one.
pub fn write_pose_csv<T: Real>(path: impl AsRef<Path>, rows: &[TraceRow<T>]) -> Result<()> {
    let path = path.as_ref();
    let with_status = rows.iter().any(|r| r.status.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = POSE_CSV_HEADER.to_vec();
    if with_status {
        header.push("status");
    }
    w.write_record(&header)?;
    for r in rows {
        let p = &r.pose;
        let mut rec = vec![r.frame.to_string()];
        rec.extend([p.tx, p.ty, p.s, p.rx, p.ry, p.rz, p.alpha].map(|v| to_f64(v).to_string()));
        if with_status {
            rec.push(r.status.map(|s| s.as_str()).unwrap_or("").to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_pose_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<TraceRow<T>>> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 8 || cols[..8] != POSE_CSV_HEADER {
        return Err(Error::parse(&ctx, format!("unexpected header {cols:?}")));
    }
    let status_col = cols.iter().position(|c| *c == "status");
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::parse(&ctx, format!("bad value in column {}", cols[i])))
        };
        let frame = rec
            .get(0)
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::parse(&ctx, "bad frame index"))?;
        let v = |i: usize| -> Result<T> { Ok(T::from_f64(num(i)?).unwrap()) };
        let pose = PoseState {
            tx: v(1)?,
            ty: v(2)?,
            s: v(3)?,
            rx: v(4)?,
            ry: v(5)?,
            rz: v(6)?,
            alpha: v(7)?,
            ..PoseState::identity()
        };
        let status = match status_col.and_then(|i| rec.get(i)) {
            None | Some("") => None,
            Some(s) => Some(s.parse()?),
        };
        rows.push(TraceRow {
            frame,
            pose,
            status,
        });
    }
    Ok(rows)
}

/// Per-dimension error values for the serialized pose dimensions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DimErrors<T> {
    pub tx: T,
    pub ty: T,
    pub s: T,
    pub rx: T,
    pub ry: T,
    pub rz: T,
    pub alpha: T,
}

impl<T: Real> DimErrors<T> {
    pub const NAMES: [&'static str; 7] = ["tx", "ty", "s", "rx", "ry", "rz", "alpha"];

    fn to_array(self) -> [T; 7] {
        [self.tx, self.ty, self.s, self.rx, self.ry, self.rz, self.alpha]
    }

    fn from_array(a: [T; 7]) -> Self {
        DimErrors {
            tx: a[0],
            ty: a[1],
            s: a[2],
            rx: a[3],
            ry: a[4],
            rz: a[5],
            alpha: a[6],
        }
    }

    fn to_json(self) -> serde_json::Value {
        let map = Self::NAMES
            .iter()
            .zip(self.to_array())
            .map(|(k, v)| (k.to_string(), serde_json::json!(to_f64(v))))
            .collect();
        serde_json::Value::Object(map)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseErrorMetrics<T> {
    pub mae: DimErrors<T>,
    pub rmse: DimErrors<T>,
    /// Absolute error per frame.
    pub per_frame: Vec<DimErrors<T>>,
    pub frames: usize,
}

impl<T: Real> PoseErrorMetrics<T> {
    /// `{"mae":{…},"rmse":{…},"frames":…}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mae": self.mae.to_json(),
            "rmse": self.rmse.to_json(),
            "frames": self.frames,
        })
    }
}

/// Absolute per-dimension error with angles wrapped to `(-180, 180]`.
pub fn abs_errors<T: Real>(est: &PoseState<T>, truth: &PoseState<T>) -> DimErrors<T> {
    DimErrors {
        tx: (est.tx - truth.tx).abs(),
        ty: (est.ty - truth.ty).abs(),
        s: (est.s - truth.s).abs(),
        rx: wrap_difference(est.rx - truth.rx).abs(),
        ry: wrap_difference(est.ry - truth.ry).abs(),
        rz: wrap_difference(est.rz - truth.rz).abs(),
        alpha: (est.alpha - truth.alpha).abs(),
    }
}

pub fn pose_error<T: Real>(
    estimated: &[TraceRow<T>],
    truth: &[TraceRow<T>],
) -> Result<PoseErrorMetrics<T>> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimated rows vs {} truth rows",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_frame = Vec::with_capacity(estimated.len());
    let mut abs_sum = [T::zero(); 7];
    let mut sq_sum = [T::zero(); 7];
    for (e, t) in estimated.iter().zip(truth) {
        if e.frame != t.frame {
            return Err(Error::LengthMismatch(format!(
                "frame {} paired with frame {}",
                e.frame, t.frame
            )));
        }
        let err = abs_errors(&e.pose, &t.pose);
        for (i, v) in err.to_array().into_iter().enumerate() {
            abs_sum[i] += v;
            sq_sum[i] += v * v;
        }
        per_frame.push(err);
    }
    let n = T::from_usize(estimated.len()).unwrap();
    Ok(PoseErrorMetrics {
        mae: DimErrors::from_array(abs_sum.map(|v| v / n)),
        rmse: DimErrors::from_array(sq_sum.map(|v| (v / n).sqrt())),
        per_frame,
        frames: estimated.len(),
    })
}

/// Convenience wrapper pairing two pose sequences frame by frame.
pub fn pose_error_poses<T: Real>(
    estimated: &[PoseState<T>],
    truth: &[PoseState<T>],
) -> Result<PoseErrorMetrics<T>> {
    let rows = |ps: &[PoseState<T>]| -> Vec<TraceRow<T>> {
        ps.iter()
            .enumerate()
            .map(|(k, p)| TraceRow {
                frame: k as u64,
                pose: *p,
                status: None,
            })
            .collect()
    };
    pose_error(&rows(estimated), &rows(truth))
}
