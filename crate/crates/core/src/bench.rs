//! Self-contained end-to-end setup on a synthetic clip: subject A's frames
//! and template, subject B's bank, and the ground truth.

use crate::error::Result;
use crate::facebank::{build_bank, BankGrid, FaceBank};
use crate::geometry::{CameraModel, EllipsoidModel};
use crate::image::RgbImage;
use crate::pipeline::Session;
use crate::scalar::Real;
use crate::synth::{render_frontal, render_sequence, GroundTruthTrace, SceneScript, TextureSpec};
use crate::tracker::{calibrate_template, SparseTemplate, TrackerConfig, DEFAULT_TEMPLATE_POINTS};

/// Background level of the calibration photos.
pub const FRONTAL_BACKGROUND: f32 = 0.5;

/// Texture of the replacement subject: a different seed and a warm tint.
pub fn replacement_texture() -> TextureSpec {
    TextureSpec {
        seed: 99,
        tint: [1.0, 0.8, 0.6],
        ..TextureSpec::default()
    }
}

#[derive(Clone, Debug)]
pub struct BenchRig<T> {
    pub model: EllipsoidModel<T>,
    pub cam: CameraModel<T>,
    pub template: SparseTemplate<T>,
    pub bank: FaceBank<T>,
    pub frames: Vec<RgbImage>,
    pub truth: GroundTruthTrace<T>,
}

impl<T: Real> BenchRig<T> {
    /// Renders `script` at `width x height`, calibrates on subject A's
    /// frontal view and builds the default bank for subject B.
    pub fn new(script: &SceneScript, width: usize, height: usize, seed: u64) -> Result<Self> {
        let model = EllipsoidModel::default();
        let cam = CameraModel::centered(width, height);
        let frontal_a = render_frontal(&script.texture, &model, &cam, FRONTAL_BACKGROUND);
        let template =
            calibrate_template(&frontal_a.to_gray(), &model, &cam, DEFAULT_TEMPLATE_POINTS, seed)?;
        let frontal_b = render_frontal(&replacement_texture(), &model, &cam, FRONTAL_BACKGROUND);
        let bank = build_bank(&frontal_b, &model, &cam, BankGrid::default())?;
        let (frames, truth) = render_sequence(script, &model, &cam)?;
        Ok(BenchRig {
            model,
            cam,
            template,
            bank,
            frames,
            truth,
        })
    }

    pub fn session<'a>(&'a self, tracker: &'a TrackerConfig<T>) -> Session<'a, T> {
        Session {
            template: &self.template,
            bank: &self.bank,
            cam: self.cam,
            tracker,
        }
    }
}
