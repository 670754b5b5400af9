//! Four-stage concurrent execution: source -> track -> swap -> sink.
//!
//! Stages run on their own threads and talk only through bounded FIFO
//! queues. In live mode a full queue drops its oldest frame; in
//! deterministic mode producers block, nothing is lost, and the output
//! bytes depend only on the seed and the input frames.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::compositor::{composite, match_illumination, DEFAULT_FEATHER_PX};
use crate::error::{Error, Result};
use crate::eval::TraceRow;
use crate::facebank::{warp_canonical, BlendMode, FaceBank};
use crate::geometry::{CameraModel, PoseState};
use crate::image::RgbImage;
use crate::scalar::Real;
use crate::tracker::{SparseTemplate, TrackStatus, Tracker, TrackerConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Drop-oldest load shedding; timing-dependent output.
    Live,
    /// Lossless blocking queues; reproducible output.
    #[default]
    Deterministic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub queue_capacity: usize,
    /// Display delay in frames.
    pub delay_frames: usize,
    pub track_enabled: bool,
    pub swap_enabled: bool,
    pub seed: u64,
    pub feather_px: usize,
    pub blend: BlendMode,
    /// Pace the source like a camera running at this rate.
    pub source_fps: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Deterministic,
            queue_capacity: 2,
            delay_frames: 0,
            track_enabled: true,
            swap_enabled: true,
            seed: 0,
            feather_px: DEFAULT_FEATHER_PX,
            blend: BlendMode::Nearest,
            source_fps: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity < 1 {
            return Err(Error::InvalidArgument("queue_capacity must be >= 1".into()));
        }
        if let Some(fps) = self.source_fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad source fps {fps}")));
            }
        }
        Ok(())
    }
}

pub const STAGES: [&str; 4] = ["source", "track", "swap", "sink"];

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMsg<T> {
    pub frame_index: u64,
    /// Monotonic nanoseconds since the pipeline started.
    pub capture_ns: u64,
    pub image: RgbImage,
    pub pose: Option<PoseState<T>>,
    pub status: Option<TrackStatus>,
    /// Composited frame (swap stage) or, after the sink, the displayed frame.
    pub output: Option<RgbImage>,
    /// Processing time spent in each stage.
    pub stage_ns: [u64; 4],
    pub latency_ns: Option<u64>,
}

impl<T> FrameMsg<T> {
    pub fn new(frame_index: u64, capture_ns: u64, image: RgbImage) -> Self {
        FrameMsg {
            frame_index,
            capture_ns,
            image,
            pose: None,
            status: None,
            output: None,
            stage_ns: [0; 4],
            latency_ns: None,
        }
    }

    /// What the display shows for this message.
    pub fn displayed(&self) -> &RgbImage {
        self.output.as_ref().unwrap_or(&self.image)
    }
}

/// Anything that yields frames in order. `Ok(None)` ends the stream.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Result<Option<RgbImage>>;
}

/// In-memory frames.
pub struct VecSource(std::vec::IntoIter<RgbImage>);

impl VecSource {
    pub fn new(frames: Vec<RgbImage>) -> Self {
        VecSource(frames.into_iter())
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Result<Option<RgbImage>> {
        Ok(self.0.next())
    }
}

/// Borrowed in-memory frames, cloned on demand.
pub struct SliceSource<'a>(std::slice::Iter<'a, RgbImage>);

impl<'a> SliceSource<'a> {
    pub fn new(frames: &'a [RgbImage]) -> Self {
        SliceSource(frames.iter())
    }
}

impl FrameSource for SliceSource<'_> {
    fn next_frame(&mut self) -> Result<Option<RgbImage>> {
        Ok(self.0.next().cloned())
    }
}

/// `frame_*.ppm` files read lazily in name order.
pub struct DirSource(std::vec::IntoIter<PathBuf>);

impl DirSource {
    pub fn open(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(DirSource(crate::synth::list_frames(dir)?.into_iter()))
    }
}

impl FrameSource for DirSource {
    fn next_frame(&mut self) -> Result<Option<RgbImage>> {
        self.0.next().map(RgbImage::read_ppm).transpose()
    }
}

/// Emits input `k - d` at position `k`; the first `d` positions repeat the
/// first input.
#[derive(Clone, Debug)]
pub struct DelayBuffer<M> {
    delay: usize,
    history: VecDeque<M>,
    first: Option<M>,
}

impl<M: Clone> DelayBuffer<M> {
    pub fn new(delay: usize) -> Self {
        DelayBuffer {
            delay,
            history: VecDeque::with_capacity(delay + 1),
            first: None,
        }
    }

    pub fn push(&mut self, m: M) -> M {
        if self.delay == 0 {
            return m;
        }
        if self.first.is_none() {
            self.first = Some(m.clone());
        }
        self.history.push_back(m);
        if self.history.len() > self.delay {
            self.history.pop_front().expect("non-empty history")
        } else {
            self.first.clone().expect("first frame recorded")
        }
    }
}

pub fn delay_buffer<M: Clone>(stream: impl IntoIterator<Item = M>, d: usize) -> Vec<M> {
    let mut buf = DelayBuffer::new(d);
    stream.into_iter().map(|m| buf.push(m)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    #[serde(skip)]
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub frames: usize,
    pub dropped: u64,
}

impl LatencyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Nearest-rank percentile of an ascending slice.
fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Latency statistics from `(capture_ns, done_ns)` pairs.
pub fn measure_latency(samples: &[(u64, u64)]) -> Result<LatencyReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ms = Vec::with_capacity(samples.len());
    for &(capture, done) in samples {
        if done < capture {
            return Err(Error::InvalidArgument(format!(
                "completion {done} precedes capture {capture}"
            )));
        }
        ms.push((done - capture) as f64 / 1e6);
    }
    let mut sorted = ms.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(LatencyReport {
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        p50_ms: nearest_rank(&sorted, 50.0),
        p95_ms: nearest_rank(&sorted, 95.0),
        max_ms: *sorted.last().unwrap(),
        frames: ms.len(),
        dropped: 0,
        samples_ms: ms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Overflow {
    Block,
    DropOldest,
}

struct QueueState<M> {
    buf: VecDeque<M>,
    closed: bool,
    dropped: u64,
}

/// Bounded FIFO shared by two stages.
struct BoundedQueue<M> {
    capacity: usize,
    policy: Overflow,
    state: Mutex<QueueState<M>>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl<M> BoundedQueue<M> {
    fn new(capacity: usize, policy: Overflow) -> Self {
        BoundedQueue {
            capacity,
            policy,
            state: Mutex::new(QueueState {
                buf: VecDeque::with_capacity(capacity),
                closed: false,
                dropped: 0,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    /// `false` once the queue is closed.
    fn push(&self, m: M) -> bool {
        let mut st = self.state.lock().unwrap();
        match self.policy {
            Overflow::Block => {
                while st.buf.len() >= self.capacity && !st.closed {
                    st = self.not_full.wait(st).unwrap();
                }
            }
            Overflow::DropOldest => {
                if st.buf.len() >= self.capacity {
                    st.buf.pop_front();
                    st.dropped += 1;
                }
            }
        }
        if st.closed {
            return false;
        }
        st.buf.push_back(m);
        self.not_empty.notify_one();
        true
    }

    fn pop(&self) -> Option<M> {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(m) = st.buf.pop_front() {
                self.not_full.notify_one();
                return Some(m);
            }
            if st.closed {
                return None;
            }
            st = self.not_empty.wait(st).unwrap();
        }
    }

    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }
}

/// Everything the track and swap stages read.
#[derive(Clone, Copy, Debug)]
pub struct Session<'a, T> {
    pub template: &'a SparseTemplate<T>,
    pub bank: &'a FaceBank<T>,
    pub cam: CameraModel<T>,
    pub tracker: &'a TrackerConfig<T>,
}

#[derive(Clone, Debug)]
pub struct PipelineSummary<T> {
    pub poses: Vec<TraceRow<T>>,
    pub report: LatencyReport,
}

fn elapsed_ns(epoch: Instant) -> u64 {
    epoch.elapsed().as_nanos() as u64
}

fn track_stage<T: Real>(tracker: Option<&mut Tracker<T>>, msg: &mut FrameMsg<T>) -> Result<()> {
    if let Some(tracker) = tracker {
        let out = tracker.track_frame(&msg.image.to_gray())?;
        msg.pose = Some(out.pose);
        msg.status = Some(out.status);
    }
    Ok(())
}

/// Replaces the tracked face; frames without a usable pose pass through.
pub fn swap_frame<T: Real>(
    session: &Session<'_, T>,
    cfg: &PipelineConfig,
    frame: &RgbImage,
    pose: &PoseState<T>,
) -> Result<Option<RgbImage>> {
    if !pose.is_valid() || session.bank.is_empty() {
        return Ok(None);
    }
    let (face, mask, alpha_bank) = session.bank.replacement(pose, cfg.blend);
    let (warped, warped_mask) = match warp_canonical(&face, &mask, pose, &session.cam) {
        Ok(w) => w,
        Err(Error::EmptyOutput) => return Ok(None),
        Err(e) => return Err(e),
    };
    let lit = match_illumination(&warped, pose.alpha, alpha_bank)?;
    composite(frame, &lit, &warped_mask, cfg.feather_px).map(Some)
}

fn swap_stage<T: Real>(
    session: &Session<'_, T>,
    cfg: &PipelineConfig,
    msg: &mut FrameMsg<T>,
) -> Result<()> {
    if !cfg.swap_enabled {
        return Ok(());
    }
    if let (Some(pose), Some(TrackStatus::Tracking)) = (msg.pose, msg.status) {
        msg.output = swap_frame(session, cfg, &msg.image, &pose)?;
    }
    Ok(())
}

struct SinkState<T> {
    delay: DelayBuffer<RgbImage>,
    poses: Vec<TraceRow<T>>,
    samples: Vec<(u64, u64)>,
}

impl<T: Real> SinkState<T> {
    fn new(cfg: &PipelineConfig) -> Self {
        SinkState {
            delay: DelayBuffer::new(cfg.delay_frames),
            poses: Vec::new(),
            samples: Vec::new(),
        }
    }

    fn finish_frame(&mut self, mut msg: FrameMsg<T>, epoch: Instant, start: u64) -> FrameMsg<T> {
        let shown = self.delay.push(msg.displayed().clone());
        msg.output = Some(shown);
        if let Some(pose) = msg.pose {
            self.poses.push(TraceRow {
                frame: msg.frame_index,
                pose,
                status: msg.status,
            });
        }
        let done = elapsed_ns(epoch);
        msg.stage_ns[3] = done - start;
        msg.latency_ns = Some(done - msg.capture_ns);
        self.samples.push((msg.capture_ns, done));
        msg
    }

    fn summary(self, dropped: u64) -> Result<PipelineSummary<T>> {
        let mut report = measure_latency(&self.samples)?;
        report.dropped = dropped;
        Ok(PipelineSummary {
            poses: self.poses,
            report,
        })
    }
}

fn stage_err(stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::StageFailure {
        stage,
        source: Box::new(e),
    }
}

fn make_tracker<T: Real>(session: &Session<'_, T>, cfg: &PipelineConfig) -> Result<Option<Tracker<T>>> {
    if !cfg.track_enabled {
        return Ok(None);
    }
    Tracker::new(
        session.template.clone(),
        session.cam,
        session.tracker.clone(),
        cfg.seed,
    )
    .map(Some)
}

/// Runs the four stages concurrently. `sink` sees every displayed frame in
/// order on the sink thread.
pub fn run_pipeline<T, S, F>(
    mut source: S,
    session: &Session<'_, T>,
    cfg: &PipelineConfig,
    mut sink: F,
) -> Result<PipelineSummary<T>>
where
    T: Real,
    S: FrameSource,
    F: FnMut(FrameMsg<T>) -> Result<()> + Send,
{
    cfg.validate()?;
    let mut tracker = make_tracker(session, cfg)?;
    let policy = match cfg.mode {
        Mode::Live => Overflow::DropOldest,
        Mode::Deterministic => Overflow::Block,
    };
    let to_track = BoundedQueue::<FrameMsg<T>>::new(cfg.queue_capacity, policy);
    let to_swap = BoundedQueue::<FrameMsg<T>>::new(cfg.queue_capacity, policy);
    let to_sink = BoundedQueue::<FrameMsg<T>>::new(cfg.queue_capacity, policy);
    let epoch = Instant::now();

    let (src_res, track_res, swap_res, sink_res) = std::thread::scope(|scope| {
        let source_handle = scope.spawn(|| {
            let res = (|| -> Result<()> {
                let period = cfg.source_fps.map(|f| Duration::from_secs_f64(1.0 / f));
                let mut index = 0u64;
                loop {
                    if let Some(p) = period {
                        let due = epoch + p * index as u32;
                        let now = Instant::now();
                        if due > now {
                            std::thread::sleep(due - now);
                        }
                    }
                    let capture = elapsed_ns(epoch);
                    let Some(image) = source.next_frame()? else {
                        return Ok(());
                    };
                    let mut msg = FrameMsg::new(index, capture, image);
                    msg.stage_ns[0] = elapsed_ns(epoch) - capture;
                    if !to_track.push(msg) {
                        return Ok(());
                    }
                    index += 1;
                }
            })();
            to_track.close();
            res.map_err(stage_err("source"))
        });
        let track_handle = scope.spawn(|| {
            let res = (|| -> Result<()> {
                while let Some(mut msg) = to_track.pop() {
                    let t0 = elapsed_ns(epoch);
                    track_stage(tracker.as_mut(), &mut msg)?;
                    msg.stage_ns[1] = elapsed_ns(epoch) - t0;
                    if !to_swap.push(msg) {
                        break;
                    }
                }
                Ok(())
            })();
            to_track.close();
            to_swap.close();
            res.map_err(stage_err("track"))
        });
        let swap_handle = scope.spawn(|| {
            let res = (|| -> Result<()> {
                while let Some(mut msg) = to_swap.pop() {
                    let t0 = elapsed_ns(epoch);
                    swap_stage(session, cfg, &mut msg)?;
                    msg.stage_ns[2] = elapsed_ns(epoch) - t0;
                    if !to_sink.push(msg) {
                        break;
                    }
                }
                Ok(())
            })();
            to_swap.close();
            to_sink.close();
            res.map_err(stage_err("swap"))
        });
        let sink_handle = scope.spawn(|| {
            let mut state = SinkState::<T>::new(cfg);
            let res = (|| -> Result<()> {
                while let Some(msg) = to_sink.pop() {
                    let t0 = elapsed_ns(epoch);
                    let msg = state.finish_frame(msg, epoch, t0);
                    sink(msg)?;
                }
                Ok(())
            })();
            to_sink.close();
            res.map(|_| state).map_err(stage_err("sink"))
        });
        (
            source_handle.join().expect("source thread panicked"),
            track_handle.join().expect("track thread panicked"),
            swap_handle.join().expect("swap thread panicked"),
            sink_handle.join().expect("sink thread panicked"),
        )
    });
    src_res?;
    track_res?;
    swap_res?;
    let state = sink_res?;
    let dropped = to_track.dropped() + to_swap.dropped() + to_sink.dropped();
    state.summary(dropped)
}

/// Executes the same stages one frame at a time on the calling thread.
/// Output matches [`run_pipeline`] in deterministic mode bit for bit.
pub fn run_sequential<T, S, F>(
    mut source: S,
    session: &Session<'_, T>,
    cfg: &PipelineConfig,
    mut sink: F,
) -> Result<PipelineSummary<T>>
where
    T: Real,
    S: FrameSource,
    F: FnMut(FrameMsg<T>) -> Result<()>,
{
    cfg.validate()?;
    let mut tracker = make_tracker(session, cfg)?;
    let mut state = SinkState::<T>::new(cfg);
    let epoch = Instant::now();
    let mut index = 0u64;
    loop {
        let capture = elapsed_ns(epoch);
        let Some(image) = source.next_frame().map_err(stage_err("source"))? else {
            break;
        };
        let mut msg = FrameMsg::new(index, capture, image);
        let t0 = elapsed_ns(epoch);
        msg.stage_ns[0] = t0 - capture;
        track_stage(tracker.as_mut(), &mut msg).map_err(stage_err("track"))?;
        let t1 = elapsed_ns(epoch);
        msg.stage_ns[1] = t1 - t0;
        swap_stage(session, cfg, &mut msg).map_err(stage_err("swap"))?;
        let t2 = elapsed_ns(epoch);
        msg.stage_ns[2] = t2 - t1;
        let msg = state.finish_frame(msg, epoch, t2);
        sink(msg).map_err(stage_err("sink"))?;
        index += 1;
    }
    state.summary(0)
}
