//! Real-time face replacement for video streams.
//!
//! A sparse-template particle filter tracks the head of subject A as a rigid
//! ellipsoid under scaled-orthographic projection. A bank of pose-tagged
//! renders of subject B's face, built from one frontal photo, supplies the
//! replacement, which is warped onto A's estimated pose and feather-blended
//! into the frame. A staged pipeline runs capture, tracking, swapping and
//! display concurrently with bounded queues and an optional display delay.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

// `!(x > 0)` is the NaN-rejecting positivity check used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod compositor;
pub mod config;
pub mod error;
pub mod eval;
pub mod facebank;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{CameraModel, EllipsoidModel, PoseState};
pub use image::{GrayImage, RgbImage};
pub use scalar::Real;
pub use tracker::{TrackStatus, Tracker};

pub type Pose = PoseState<f64>;
pub type Pose32 = PoseState<f32>;
pub type Ellipsoid = EllipsoidModel<f64>;
pub type Camera = CameraModel<f64>;
pub type Template = tracker::SparseTemplate<f64>;
pub type Particles = tracker::ParticleSet<f64>;
pub type TrackerConfig = tracker::TrackerConfig<f64>;
pub type HeadTracker = Tracker<f64>;
pub type FaceBank = facebank::FaceBank<f64>;
pub type Trace = synth::GroundTruthTrace<f64>;
pub type Metrics = eval::PoseErrorMetrics<f64>;
