//! Head pose parameterization, ellipsoid head model and scaled-orthographic
//! projection.
//!
//! Model space: x right, y up, z toward the camera. Image space: u right,
//! v down. Angles are degrees everywhere.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::{lit, Real};

pub type Vec3<T> = [T; 3];

/// The ten-component head state tracked per frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseState<T> {
    /// Image-plane translation from the principal point, pixels.
    pub tx: T,
    pub ty: T,
    /// Translation velocity, pixels per frame.
    pub tx_dot: T,
    pub ty_dot: T,
    /// Scale (model units to pixels).
    pub s: T,
    /// Pitch (nodding), degrees.
    pub rx: T,
    /// Yaw (head shake), degrees.
    pub ry: T,
    /// Roll, degrees.
    pub rz: T,
    /// Yaw velocity, degrees per frame.
    pub ry_dot: T,
    /// Global illumination gain.
    pub alpha: T,
}

impl<T: Real> Default for PoseState<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> PoseState<T> {
    pub const DIM: usize = 10;
    pub const NAMES: [&'static str; 10] = [
        "tx", "ty", "tx_dot", "ty_dot", "s", "rx", "ry", "rz", "ry_dot", "alpha",
    ];
    /// Indices of the angular components within [`PoseState::to_array`].
    pub const ANGLES: [usize; 3] = [5, 6, 7];

    /// Canonical calibration pose: centered, unit scale, no rotation, unit gain.
    pub fn identity() -> Self {
        let z = T::zero();
        PoseState {
            tx: z,
            ty: z,
            tx_dot: z,
            ty_dot: z,
            s: T::one(),
            rx: z,
            ry: z,
            rz: z,
            ry_dot: z,
            alpha: T::one(),
        }
    }

    /// All components set to `v`. Handy for per-dimension noise settings.
    pub fn splat(v: T) -> Self {
        Self::from_array([v; 10])
    }

    pub fn with_rotation(mut self, rx: T, ry: T, rz: T) -> Self {
        self.rx = rx;
        self.ry = ry;
        self.rz = rz;
        self
    }

    pub fn to_array(&self) -> [T; 10] {
        [
            self.tx,
            self.ty,
            self.tx_dot,
            self.ty_dot,
            self.s,
            self.rx,
            self.ry,
            self.rz,
            self.ry_dot,
            self.alpha,
        ]
    }

    pub fn from_array(a: [T; 10]) -> Self {
        PoseState {
            tx: a[0],
            ty: a[1],
            tx_dot: a[2],
            ty_dot: a[3],
            s: a[4],
            rx: a[5],
            ry: a[6],
            rz: a[7],
            ry_dot: a[8],
            alpha: a[9],
        }
    }

    pub fn is_valid(&self) -> bool {
        let half_turn = lit::<T>(180.0);
        self.to_array().iter().all(|v| v.is_finite())
            && self.s > T::zero()
            && self.alpha > T::zero()
            && [self.rx, self.ry, self.rz]
                .iter()
                .all(|&a| a >= -half_turn && a < half_turn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid pose {self:?}")))
        }
    }

    pub fn rotation(&self) -> Rotation<T> {
        rotation_matrix(self.rx, self.ry, self.rz)
    }

    /// Lossless conversion between scalar types where representable.
    pub fn cast<U: Real>(&self) -> PoseState<U> {
        PoseState::from_array(self.to_array().map(|v| U::from(v).unwrap_or_else(U::nan)))
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_degrees<T: Real>(a: T) -> T {
    let full = lit::<T>(360.0);
    let half = lit::<T>(180.0);
    let mut w = (a + half) % full;
    if w < T::zero() {
        w += full;
    }
    let w = w - half;
    // `%` can land exactly on +180 through rounding.
    if w >= half {
        w - full
    } else {
        w
    }
}

/// Wraps an angular difference into `(-180, 180]`.
pub fn wrap_difference<T: Real>(d: T) -> T {
    let w = wrap_degrees(d);
    if w == lit::<T>(-180.0) {
        -w
    } else {
        w
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation<T>(pub [[T; 3]; 3]);

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Rotation([[o, z, z], [z, o, z], [z, z, o]])
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    #[inline]
    pub fn apply_transpose(&self, p: Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[1][0] * p[1] + m[2][0] * p[2],
            m[0][1] * p[0] + m[1][1] * p[1] + m[2][1] * p[2],
            m[0][2] * p[0] + m[1][2] * p[1] + m[2][2] * p[2],
        ]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Rotation([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(T::zero(), |acc, k| acc + self.0[i][k] * other.0[k][j]);
            }
        }
        Rotation(out)
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// `R = Rz(rz) * Rx(rx) * Ry(ry)`: yaw is applied first, then pitch, then roll.
pub fn rotation_matrix<T: Real>(rx: T, ry: T, rz: T) -> Rotation<T> {
    let (sx, cx) = rx.to_radians().sin_cos();
    let (sy, cy) = ry.to_radians().sin_cos();
    let (sz, cz) = rz.to_radians().sin_cos();
    let z = T::zero();
    let o = T::one();
    let rot_x = Rotation([[o, z, z], [z, cx, -sx], [z, sx, cx]]);
    let rot_y = Rotation([[cy, z, sy], [z, o, z], [-sy, z, cy]]);
    let rot_z = Rotation([[cz, -sz, z], [sz, cz, z], [z, z, o]]);
    rot_z.mul(&rot_x).mul(&rot_y)
}

/// Rigid ellipsoid standing in for the head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipsoidModel<T> {
    pub ax: T,
    pub ay: T,
    pub az: T,
    /// Degrees of longitude/latitude per texel of the surface parameterization.
    pub texel_deg: T,
}

impl<T: Real> Default for EllipsoidModel<T> {
    fn default() -> Self {
        EllipsoidModel {
            ax: lit(50.0),
            ay: lit(65.0),
            az: lit(55.0),
            texel_deg: T::one(),
        }
    }
}

impl<T: Real> EllipsoidModel<T> {
    pub fn new(ax: T, ay: T, az: T) -> Result<Self> {
        let m = EllipsoidModel {
            ax,
            ay,
            az,
            texel_deg: T::one(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.ax, self.ay, self.az, self.texel_deg]
            .iter()
            .all(|&v| v.is_finite() && v > T::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid ellipsoid {self:?}")))
        }
    }

    pub fn semi_axes(&self) -> Vec3<T> {
        [self.ax, self.ay, self.az]
    }

    pub fn bounding_radius(&self) -> T {
        self.ax.max(self.ay).max(self.az)
    }

    /// `x^2/ax^2 + y^2/ay^2 + z^2/az^2`; equals 1 on the surface.
    pub fn implicit(&self, p: Vec3<T>) -> T {
        let e = self.semi_axes();
        (0..3).fold(T::zero(), |acc, i| acc + (p[i] / e[i]).powi(2))
    }

    /// Outward unit normal at a surface point.
    pub fn normal(&self, p: Vec3<T>) -> Vec3<T> {
        let e = self.semi_axes();
        let g = [p[0] / (e[0] * e[0]), p[1] / (e[1] * e[1]), p[2] / (e[2] * e[2])];
        normalize(g)
    }

    /// Point on the camera-facing half with the given model-space `(x, y)`.
    pub fn front_point(&self, x: T, y: T) -> Option<Vec3<T>> {
        let r = T::one() - (x / self.ax).powi(2) - (y / self.ay).powi(2);
        if r < T::zero() {
            None
        } else {
            Some([x, y, self.az * r.sqrt()])
        }
    }

    /// Surface point seen along the viewing ray through camera-space `(x, y)`
    /// when the ellipsoid is rotated by `rot`, i.e. the intersection closest
    /// to the camera, in model coordinates.
    pub fn ray_hit(&self, rot: &Rotation<T>, x: T, y: T) -> Option<Vec3<T>> {
        let e = self.semi_axes();
        let m = &rot.0;
        // p(z) = R^T (x, y, z) = a + z b
        let a = [
            m[0][0] * x + m[1][0] * y,
            m[0][1] * x + m[1][1] * y,
            m[0][2] * x + m[1][2] * y,
        ];
        let b = [m[2][0], m[2][1], m[2][2]];
        let (mut qa, mut qb, mut qc) = (T::zero(), T::zero(), -T::one());
        for i in 0..3 {
            let inv = T::one() / (e[i] * e[i]);
            qa += b[i] * b[i] * inv;
            qb += a[i] * b[i] * inv;
            qc += a[i] * a[i] * inv;
        }
        // qa z^2 + 2 qb z + qc = 0, larger root faces the camera
        let disc = qb * qb - qa * qc;
        if disc < T::zero() {
            return None;
        }
        let z = (-qb + disc.sqrt()) / qa;
        Some([a[0] + z * b[0], a[1] + z * b[1], a[2] + z * b[2]])
    }

    /// Longitude (about the y axis, 0 at the front pole) and latitude, degrees.
    pub fn surface_coords(&self, p: Vec3<T>) -> (T, T) {
        let lon = (p[0] / self.ax).atan2(p[2] / self.az).to_degrees();
        let lat = (p[1] / self.ay)
            .max(-T::one())
            .min(T::one())
            .asin()
            .to_degrees();
        (lon, lat)
    }
}

/// Principal point and raster size of the single camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel<T> {
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraModel<T> {
    pub fn new(cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let cam = CameraModel {
            cx,
            cy,
            width,
            height,
        };
        let w = T::from_usize(width).unwrap();
        let h = T::from_usize(height).unwrap();
        if cx >= T::zero() && cx < w && cy >= T::zero() && cy < h {
            Ok(cam)
        } else {
            Err(Error::InvalidArgument(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )))
        }
    }

    /// Principal point at the (integer) image center.
    pub fn centered(width: usize, height: usize) -> Self {
        CameraModel {
            cx: T::from_usize(width / 2).unwrap(),
            cy: T::from_usize(height / 2).unwrap(),
            width,
            height,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Scaled-orthographic projection of a model point to continuous pixel coordinates.
#[inline]
pub fn project_point<T: Real>(p: Vec3<T>, pose: &PoseState<T>, cam: &CameraModel<T>) -> [T; 2] {
    project_with(&pose.rotation(), p, pose, cam)
}

/// [`project_point`] with a precomputed rotation.
#[inline]
pub fn project_with<T: Real>(
    rot: &Rotation<T>,
    p: Vec3<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> [T; 2] {
    let q = rot.apply(p);
    [cam.cx + pose.s * q[0] + pose.tx, cam.cy - pose.s * q[1] + pose.ty]
}

/// Inverse of the in-plane part of [`project_point`]: camera-space `(x, y)`
/// (model units, y up) seen at pixel `(u, v)`.
#[inline]
pub fn unproject_pixel<T: Real>(u: T, v: T, pose: &PoseState<T>, cam: &CameraModel<T>) -> (T, T) {
    ((u - cam.cx - pose.tx) / pose.s, -(v - cam.cy - pose.ty) / pose.s)
}

/// True iff the rotated outward normal at `p` points toward the camera.
pub fn visible<T: Real>(model: &EllipsoidModel<T>, p: Vec3<T>, pose: &PoseState<T>) -> bool {
    normal_faces_camera(&pose.rotation(), model.normal(p))
}

#[inline]
pub fn normal_faces_camera<T: Real>(rot: &Rotation<T>, n: Vec3<T>) -> bool {
    let m = &rot.0;
    m[2][0] * n[0] + m[2][1] * n[1] + m[2][2] * n[2] > T::zero()
}

/// Outline of the projected ellipsoid as a 2x2 conic in camera-space
/// `(x, y)` model units: inside iff `[x y] Q [x y]^T <= 1`.
pub fn silhouette_conic<T: Real>(model: &EllipsoidModel<T>, rot: &Rotation<T>) -> [[T; 2]; 2] {
    let e = model.semi_axes();
    let m = &rot.0;
    // M = R diag(1/e^2) R^T
    let mut q = [[T::zero(); 3]; 3];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).fold(T::zero(), |acc, k| acc + m[i][k] * m[j][k] / (e[k] * e[k]));
        }
    }
    // Schur complement eliminates the depth coordinate.
    let c = q[2][2];
    [
        [q[0][0] - q[0][2] * q[2][0] / c, q[0][1] - q[0][2] * q[2][1] / c],
        [q[1][0] - q[1][2] * q[2][0] / c, q[1][1] - q[1][2] * q[2][1] / c],
    ]
}

/// Continuous pixel bounding box `(u_min, v_min, u_max, v_max)` of the silhouette.
pub fn silhouette_bounds<T: Real>(
    model: &EllipsoidModel<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> [T; 4] {
    let q = silhouette_conic(model, &pose.rotation());
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let hx = (q[1][1] / det).sqrt() * pose.s;
    let hy = (q[0][0] / det).sqrt() * pose.s;
    let u0 = cam.cx + pose.tx;
    let v0 = cam.cy + pose.ty;
    [u0 - hx, v0 - hy, u0 + hx, v0 + hy]
}

/// Binary mask (0/1) of pixels inside the projected ellipsoid outline.
pub fn silhouette_mask<T: Real>(
    model: &EllipsoidModel<T>,
    pose: &PoseState<T>,
    cam: &CameraModel<T>,
) -> Result<GrayImage> {
    let q = silhouette_conic(model, &pose.rotation());
    let mut mask = GrayImage::new(cam.width, cam.height, 0.0);
    let [u_min, v_min, u_max, v_max] = silhouette_bounds(model, pose, cam);
    let w = T::from_usize(cam.width).unwrap();
    let h = T::from_usize(cam.height).unwrap();
    let x0 = u_min.floor().max(T::zero());
    let y0 = v_min.floor().max(T::zero());
    let x1 = u_max.ceil().min(w - T::one());
    let y1 = v_max.ceil().min(h - T::one());
    let mut any = false;
    if x0 <= x1 && y0 <= y1 {
        let (x0, x1) = (x0.to_usize().unwrap(), x1.to_usize().unwrap());
        let (y0, y1) = (y0.to_usize().unwrap(), y1.to_usize().unwrap());
        for v in y0..=y1 {
            for u in x0..=x1 {
                let (x, y) = unproject_pixel(
                    T::from_usize(u).unwrap(),
                    T::from_usize(v).unwrap(),
                    pose,
                    cam,
                );
                let val = q[0][0] * x * x + (q[0][1] + q[1][0]) * x * y + q[1][1] * y * y;
                if val <= T::one() {
                    mask.set(u, v, 1.0);
                    any = true;
                }
            }
        }
    }
    if any {
        Ok(mask)
    } else {
        Err(Error::EmptyMask)
    }
}

#[inline]
pub fn normalize<T: Real>(v: Vec3<T>) -> Vec3<T> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: Vec3<f64>, b: Vec3<f64>) {
        for i in 0..3 {
            assert_abs_diff_eq!(a[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_conventions() {
        let id = rotation_matrix(0.0, 0.0, 0.0);
        assert_eq!(id, Rotation::identity());
        close(rotation_matrix(0.0, 90.0, 0.0).apply([0.0, 0.0, 1.0]), [1.0, 0.0, 0.0]);
        close(rotation_matrix(0.0, 0.0, 90.0).apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0]);
        // positive pitch tips the front pole downward
        let p = rotation_matrix(90.0, 0.0, 0.0).apply([0.0, 0.0, 1.0]);
        close(p, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn composition_order_is_yaw_then_pitch_then_roll() {
        let (rx, ry, rz) = (20.0, 35.0, -15.0);
        let r = rotation_matrix(rx, ry, rz);
        let p = [0.3, -0.7, 1.1];
        let step = rotation_matrix(0.0, ry, 0.0).apply(p);
        let step = rotation_matrix(rx, 0.0, 0.0).apply(step);
        let step = rotation_matrix(0.0, 0.0, rz).apply(step);
        close(r.apply(p), step);
    }

    #[test]
    fn projection_examples() {
        let cam = CameraModel::<f64>::centered(320, 240);
        let pose = PoseState::identity();
        assert_eq!(project_point([0.0, 0.0, 0.0], &pose, &cam), [160.0, 120.0]);
        let pose2 = PoseState { s: 2.0, ..pose };
        assert_eq!(project_point([10.0, 0.0, 0.0], &pose2, &cam), [180.0, 120.0]);
        let yawed = pose.with_rotation(0.0, 90.0, 0.0);
        let uv = project_point([0.0, 0.0, 55.0], &yawed, &cam);
        assert_abs_diff_eq!(uv[0], 215.0, epsilon = 1e-9);
        assert_abs_diff_eq!(uv[1], 120.0, epsilon = 1e-9);
        // y up in model space, down in the image
        assert_eq!(project_point([0.0, 10.0, 0.0], &pose, &cam), [160.0, 110.0]);
    }

    #[test]
    fn visibility_examples() {
        let m = EllipsoidModel::<f64>::default();
        let id = PoseState::identity();
        assert!(visible(&m, [0.0, 0.0, m.az], &id));
        assert!(!visible(&m, [0.0, 0.0, -m.az], &id));
        assert!(!visible(&m, [0.0, 0.0, m.az], &id.with_rotation(0.0, 180.0, 0.0)));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_degrees(180.0_f64), -180.0);
        assert_eq!(wrap_degrees(-180.0_f64), -180.0);
        assert_eq!(wrap_degrees(190.0_f64), -170.0);
        assert_eq!(wrap_degrees(-190.0_f64), 170.0);
        assert_eq!(wrap_degrees(720.0_f64), 0.0);
        assert_eq!(wrap_difference(-180.0_f64), 180.0);
        assert_eq!(wrap_difference(1.0_f64 - 359.0), 2.0);
        let w = wrap_degrees(-1e-17_f64);
        assert!((-180.0..180.0).contains(&w));
    }

    #[test]
    fn ray_hit_lands_on_surface_and_faces_camera() {
        let m = EllipsoidModel::<f64>::default();
        let rot = rotation_matrix(25.0, -40.0, 10.0);
        let p = m.ray_hit(&rot, 12.0, -20.0).unwrap();
        assert_abs_diff_eq!(m.implicit(p), 1.0, epsilon = 1e-12);
        assert!(normal_faces_camera(&rot, m.normal(p)));
        let q = rot.apply(p);
        assert_abs_diff_eq!(q[0], 12.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q[1], -20.0, epsilon = 1e-9);
        assert!(m.ray_hit(&rot, 200.0, 0.0).is_none());
    }

    #[test]
    fn silhouette_examples() {
        let m = EllipsoidModel::<f64>::default();
        let cam = CameraModel::centered(320, 240);
        let pose = PoseState::identity();
        let mask = silhouette_mask(&m, &pose, &cam).unwrap();
        assert_eq!(mask.get(160, 120), 1.0);
        assert_eq!(mask.get(160 + 50, 120), 1.0);
        assert_eq!(mask.get(160 + 51, 120), 0.0);
        assert_eq!(mask.get(160, 120 - 65), 1.0);
        assert_eq!(mask.get(160, 120 - 66), 0.0);
        let area = |img: &GrayImage| img.pixels().iter().sum::<f32>() as f64;
        let a1 = area(&mask);
        let expected = std::f64::consts::PI * 50.0 * 65.0;
        assert!((a1 / expected - 1.0).abs() < 0.01);

        let wide = CameraModel::centered(640, 480);
        let small = silhouette_mask(&m, &pose, &wide).unwrap();
        let big = silhouette_mask(&m, &PoseState { s: 2.0, ..pose }, &wide).unwrap();
        let ratio = area(&big) / area(&small);
        assert!((ratio / 4.0 - 1.0).abs() <= 0.02, "ratio {ratio}");

        let off = PoseState { tx: 1000.0, ..pose };
        assert!(matches!(silhouette_mask(&m, &off, &cam), Err(Error::EmptyMask)));
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(320.0_f64, 10.0, 320, 240).is_err());
        assert!(CameraModel::new(0.0_f64, 0.0, 320, 240).is_ok());
    }

    #[test]
    fn pose_validation() {
        let mut p = PoseState::<f64>::identity();
        assert!(p.is_valid());
        p.ry = 180.0;
        assert!(!p.is_valid());
        p.ry = 0.0;
        p.s = 0.0;
        assert!(p.validate().is_err());
    }
}
