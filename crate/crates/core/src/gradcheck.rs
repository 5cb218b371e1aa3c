//! Central finite-difference verification of backpropagated gradients.
//!
//! Every parameter entry is perturbed by `+/- step`, the loss re-evaluated,
//! and the quotient compared against the analytic gradient with a relative
//! error that tolerates near-zero denominators.

use serde::Serialize;
use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::models::{GruConfig, Model, ModelConfig, ModelError, ModelKind, TgcnConfig};
use crate::tensor::{Tape, TensorError, Value};

/// Perturbation used by [`check_model`].
pub const FD_STEP: f64 = 1e-5;
/// Largest relative error [`check_model`] accepts.
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    /// Entries checked across all parameters.
    pub checked: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Compare analytic gradients of `loss_fn` against central finite
/// differences, entry by entry, for every listed parameter. The loss must be
/// a deterministic function of the parameters; it is rebuilt on a fresh tape
/// for each evaluation. Parameters are restored to their original values.
pub fn check_gradients<F>(
    params: &[(String, Value)],
    step: f64,
    loss_fn: F,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&Tape) -> Result<Value, ModelError>,
{
    for (_, p) in params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let loss = loss_fn(&tape)?;
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, p)| p.grad().map(|g| g.to_vec()).unwrap_or_default())
        .collect();

    let eval = |loss_fn: &F| -> Result<f64, GradCheckError> {
        let tape = Tape::new();
        let loss = loss_fn(&tape)?;
        Ok(loss.item())
    };

    let mut report = GradCheckReport {
        params: Vec::with_capacity(params.len()),
        checked: 0,
        max_rel_err: 0.0,
    };
    for (slot, (name, p)) in params.iter().enumerate() {
        let mut max_rel_err: f64 = 0.0;
        for i in 0..p.numel() {
            let original = p.data()[i];
            p.data_mut()[i] = original + step;
            let plus = eval(&loss_fn)?;
            p.data_mut()[i] = original - step;
            let minus = eval(&loss_fn)?;
            p.data_mut()[i] = original;
            let fd = (plus - minus) / (2.0 * step);
            max_rel_err = max_rel_err.max(relative_error(analytic[slot][i], fd));
        }
        report.checked += p.numel();
        report.max_rel_err = report.max_rel_err.max(max_rel_err);
        report.params.push(ParamCheck {
            name: name.clone(),
            entries: p.numel(),
            max_rel_err,
        });
    }
    Ok(report)
}

/// Run [`check_gradients`] on a seeded model of the given configuration,
/// using a fixed smooth clip of `frames_len` frames and the full training
/// loss against class 1.
pub fn check_config(
    config: &ModelConfig,
    frames_len: usize,
    seed: u64,
) -> Result<GradCheckReport, GradCheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(config, &mut rng)?;

    let keypoints = match config {
        ModelConfig::Tgcn(c) => c.vertices,
        ModelConfig::Gru(c) => c.keypoints,
    };
    let clip: Vec<Vec<[f64; 2]>> = (0..frames_len)
        .map(|t| {
            (0..keypoints)
                .map(|k| {
                    let phase = t as f64 * 0.7 + k as f64 * 1.3;
                    [phase.sin() * 0.6, phase.cos() * 0.6]
                })
                .collect()
        })
        .collect();

    let params = model.parameters();
    check_gradients(&params, FD_STEP, move |tape| model.loss(tape, &clip, 1))
}

/// A [`check_config`] run on a small stock instance of the architecture:
/// 5 keypoints, 4 frames, 3 classes. Small geometry keeps the entry count in
/// the hundreds.
pub fn check_model(kind: ModelKind, seed: u64) -> Result<GradCheckReport, GradCheckError> {
    let (config, frames_len) = tiny_geometry(kind, 5, 4, 3);
    check_config(&config, frames_len, seed)
}

/// The small test geometry for an architecture, parameterized by keypoint,
/// frame and class counts. Returns the configuration and the clip length to
/// feed it. For the graph model the feature width is twice the window, with
/// two blocks; the recurrent model gets two layers of width `2 * frames`.
pub fn tiny_geometry(
    kind: ModelKind,
    keypoints: usize,
    frames: usize,
    classes: usize,
) -> (ModelConfig, usize) {
    let config = match kind {
        ModelKind::Tgcn => ModelConfig::Tgcn(TgcnConfig {
            vertices: keypoints,
            window: frames,
            hidden: 2 * frames,
            blocks: 2,
            classes,
        }),
        ModelKind::Gru => ModelConfig::Gru(GruConfig {
            keypoints,
            hidden: 2 * frames,
            layers: 2,
            classes,
        }),
    };
    let frames_len = match kind {
        ModelKind::Tgcn => frames,
        ModelKind::Gru => frames + 1,
    };
    (config, frames_len)
}
