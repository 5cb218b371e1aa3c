//! Training and evaluation: dataset loading, the epoch loop with early
//! stopping, top-k accuracy, and checkpoints.

mod checkpoint;
mod optimizer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, LoadedCheckpoint, ParamEntry, CHECKPOINT_VERSION,
};
pub use optimizer::Adam;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    mirror_horizontal, normalize_frames, pad_frames, read_pose, sample_window, DataError, Manifest,
    Split,
};
use crate::models::{Model, ModelError, ModelKind, DEFAULT_WINDOW};
use crate::tensor::{Tape, TensorError, Value};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("instance {0:?} has no split label; assign splits first")]
    MissingSplit(String),
    #[error("gloss {0:?} is not in the model's vocabulary")]
    UnknownGloss(String),
    #[error("the {} split is empty", .0.name())]
    EmptySplit(Split),
    #[error("no gradient for parameter {0:?}; run backward before stepping")]
    MissingGradient(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint lists {glosses} glosses but the model has {classes} classes")]
    GlossCount { glosses: usize, classes: usize },
    #[error("checkpoint parameter {name:?}: {reason}")]
    BadParam { name: String, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Upper bound on epochs; early stopping usually ends sooner.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without a new best validation top-1 before stopping.
    pub patience: usize,
    /// Training window length in frames.
    pub window: usize,
    /// Mirror clips left-right with probability 1/2.
    pub augment_flip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            patience: 20,
            window: DEFAULT_WINDOW,
            augment_flip: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.window < 2 {
            return Err(TrainError::BadConfig(
                "epochs, batch_size and patience must be positive and window at least 2"
                    .to_string(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(
                "learning_rate must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// One labelled clip, already normalized.
pub struct Sample {
    pub instance_id: String,
    pub label: usize,
    pub frames: Vec<Vec<[f64; 2]>>,
}

pub struct LoadedDataset {
    /// Class names, in label order.
    pub glosses: Vec<String>,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl LoadedDataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Read every instance's pose file (`<pose_dir>/<instance_id>.json`), clip it
/// to the instance's frame range, normalize by its bounding box, and sort the
/// result into splits.
///
/// Labels follow `class_names` when given (so evaluation can reuse a
/// checkpoint's vocabulary on a different manifest); otherwise the manifest's
/// gloss order defines them. Every instance must carry a split label.
pub fn load_dataset(
    manifest: &Manifest,
    pose_dir: &Path,
    class_names: Option<&[String]>,
) -> Result<LoadedDataset, TrainError> {
    let glosses: Vec<String> = match class_names {
        Some(names) => names.to_vec(),
        None => manifest.glosses(),
    };
    let label_of: HashMap<String, usize> = glosses
        .iter()
        .enumerate()
        .map(|(i, g)| (g.clone(), i))
        .collect();

    let mut dataset = LoadedDataset {
        glosses,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for entry in &manifest.entries {
        let label = *label_of
            .get(&entry.gloss)
            .ok_or_else(|| TrainError::UnknownGloss(entry.gloss.clone()))?;
        for inst in &entry.instances {
            let split = inst
                .split
                .ok_or_else(|| TrainError::MissingSplit(inst.instance_id.clone()))?;
            let pose = read_pose(&pose_dir.join(format!("{}.json", inst.instance_id)))?;
            let clipped = pose.clip(inst.frame_start, inst.frame_end)?;
            let frames = normalize_frames(clipped, inst.bbox)?;
            let sample = Sample {
                instance_id: inst.instance_id.clone(),
                label,
                frames,
            };
            match split {
                Split::Train => dataset.train.push(sample),
                Split::Val => dataset.val.push(sample),
                Split::Test => dataset.test.push(sample),
            }
        }
    }
    Ok(dataset)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_top1: f64,
}

pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_val_top1: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochLog>,
}

/// Accuracy at each requested cutoff.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    /// `(k, accuracy)` pairs, in the order the cutoffs were requested.
    pub accuracies: Vec<(usize, f64)>,
}

impl EvalReport {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.accuracies
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|&(_, a)| a)
    }
}

/// The clip a training step sees: a randomly placed window, padded up to the
/// window length for the fixed-size model, optionally mirrored.
fn prepare_training_clip<R: Rng>(
    kind: ModelKind,
    frames: &[Vec<[f64; 2]>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Vec<Vec<[f64; 2]>> {
    let range = sample_window(frames.len(), cfg.window, rng);
    let mut clip = frames[range].to_vec();
    if kind == ModelKind::Tgcn {
        clip = pad_frames(clip, cfg.window);
    }
    if cfg.augment_flip && rng.random_bool(0.5) {
        clip = mirror_horizontal(&clip);
    }
    clip
}

/// Minimize the model's loss with Adam over shuffled mini-batches; after each
/// epoch, measure validation top-1 and keep the best parameters. Stops when
/// `patience` epochs pass without improvement, and leaves the model holding
/// its best-epoch parameters.
///
/// Batches average the per-clip losses on one tape, so one backward pass per
/// batch produces the mean gradient. Given the same seed, config, data and
/// initial parameters, the whole run is bitwise reproducible.
pub fn train(
    model: &Model,
    data: &LoadedDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    if data.val.is_empty() {
        return Err(TrainError::EmptySplit(Split::Val));
    }

    let params = model.parameters();
    let mut adam = Adam::new(params.clone(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let mut total: Option<Value> = None;
            for &idx in batch {
                let sample = &data.train[idx];
                let clip = prepare_training_clip(model.kind(), &sample.frames, cfg, &mut rng);
                let loss = model.loss(&tape, &clip, sample.label)?;
                total = Some(match total {
                    None => loss,
                    Some(acc) => tape.add(&acc, &loss)?,
                });
            }
            let batch_loss = tape.scale(
                &total.expect("batches are non-empty"),
                1.0 / batch.len() as f64,
            );
            adam.zero_grads();
            tape.backward(&batch_loss)?;
            adam.step()?;
            loss_sum += batch_loss.item() * batch.len() as f64;
        }

        let val_top1 = evaluate(model, &data.val, &[1])?.accuracies[0].1;
        let log = EpochLog {
            epoch,
            mean_train_loss: loss_sum / data.train.len() as f64,
            val_top1,
        };
        on_epoch(&log);
        history.push(log);

        if best.as_ref().is_none_or(|(_, b, _)| val_top1 > *b) {
            best = Some((epoch, val_top1, snapshot(&params)));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_top1, weights) = best.expect("at least one epoch ran");
    restore(&params, &weights);
    Ok(TrainOutcome {
        best_epoch,
        best_val_top1,
        epochs_run,
        history,
    })
}

/// Top-k accuracy over a set of clips: a hit at cutoff `k` means the true
/// label appears among the `k` best-ranked classes.
pub fn evaluate(model: &Model, samples: &[Sample], ks: &[usize]) -> Result<EvalReport, TrainError> {
    let mut hits = vec![0usize; ks.len()];
    for sample in samples {
        let prediction = model.predict(&sample.frames)?;
        for (slot, &k) in ks.iter().enumerate() {
            if prediction
                .ranking
                .iter()
                .take(k)
                .any(|&c| c == sample.label)
            {
                hits[slot] += 1;
            }
        }
    }
    let denom = samples.len().max(1) as f64;
    Ok(EvalReport {
        samples: samples.len(),
        accuracies: ks
            .iter()
            .zip(hits)
            .map(|(&k, h)| (k, h as f64 / denom))
            .collect(),
    })
}

fn snapshot(params: &[(String, Value)]) -> Vec<Vec<f64>> {
    params.iter().map(|(_, p)| p.data().to_vec()).collect()
}

fn restore(params: &[(String, Value)], weights: &[Vec<f64>]) {
    for ((_, p), w) in params.iter().zip(weights) {
        p.data_mut().copy_from_slice(w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GruConfig, ModelConfig, TgcnConfig};

    /// Two easily separable motion classes on a 5-keypoint skeleton.
    fn toy_dataset(per_split: (usize, usize, usize)) -> LoadedDataset {
        let clip = |label: usize, variant: usize| {
            let frames: Vec<Vec<[f64; 2]>> = (0..12)
                .map(|t| {
                    (0..5)
                        .map(|k| {
                            let base = t as f64 * 0.5 + k as f64 + variant as f64 * 0.1;
                            if label == 0 {
                                [base.sin() * 0.8, base.cos() * 0.8]
                            } else {
                                [(2.5 * base).sin() * 0.3, 0.4 - (2.5 * base).cos() * 0.3]
                            }
                        })
                        .collect()
                })
                .collect();
            frames
        };
        let fill = |n: usize, salt: usize| {
            (0..n)
                .flat_map(|i| {
                    [0usize, 1].map(|label| Sample {
                        instance_id: format!("s{salt}_{label}_{i}"),
                        label,
                        frames: clip(label, i + salt),
                    })
                })
                .collect::<Vec<_>>()
        };
        LoadedDataset {
            glosses: vec!["wave".to_string(), "circle".to_string()],
            train: fill(per_split.0, 0),
            val: fill(per_split.1, 100),
            test: fill(per_split.2, 200),
        }
    }

    fn tiny_tgcn() -> ModelConfig {
        ModelConfig::Tgcn(TgcnConfig {
            vertices: 5,
            window: 8,
            hidden: 16,
            blocks: 1,
            classes: 2,
        })
    }

    fn tiny_gru() -> ModelConfig {
        ModelConfig::Gru(GruConfig {
            keypoints: 5,
            hidden: 8,
            layers: 1,
            classes: 2,
        })
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            patience: 8,
            window: 8,
            learning_rate: 0.01,
            augment_flip: false,
            seed: 1,
        }
    }

    #[test]
    fn tgcn_learns_the_toy_problem() {
        let data = toy_dataset((6, 3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&tiny_tgcn(), &mut rng).unwrap();
        let outcome = train(&model, &data, &quick_config(), |_| {}).unwrap();
        assert!(outcome.best_val_top1 > 0.99, "{}", outcome.best_val_top1);
        assert!(
            outcome.history[0].mean_train_loss > outcome.history.last().unwrap().mean_train_loss
        );
    }

    #[test]
    fn gru_learns_the_toy_problem() {
        let data = toy_dataset((6, 3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&tiny_gru(), &mut rng).unwrap();
        let outcome = train(&model, &data, &quick_config(), |_| {}).unwrap();
        assert!(outcome.best_val_top1 > 0.99, "{}", outcome.best_val_top1);
    }

    #[test]
    fn training_is_deterministic_given_a_seed() {
        let data = toy_dataset((4, 2, 0));
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let model = Model::new(&tiny_tgcn(), &mut rng).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                patience: 5,
                ..quick_config()
            };
            let outcome = train(&model, &data, &cfg, |_| {}).unwrap();
            let weights: Vec<Vec<f64>> = model
                .parameters()
                .iter()
                .map(|(_, p)| p.data().to_vec())
                .collect();
            (outcome.history, weights)
        };
        let (h1, w1) = run();
        let (h2, w2) = run();
        assert_eq!(w1, w2);
        let key = |h: &[EpochLog]| -> Vec<(u64, u64)> {
            h.iter()
                .map(|l| (l.mean_train_loss.to_bits(), l.val_top1.to_bits()))
                .collect()
        };
        assert_eq!(key(&h1), key(&h2));
    }

    #[test]
    fn the_model_keeps_its_best_epoch_parameters() {
        let data = toy_dataset((5, 3, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(&tiny_gru(), &mut rng).unwrap();
        let outcome = train(&model, &data, &quick_config(), |_| {}).unwrap();
        // Re-measuring validation accuracy with the restored parameters must
        // reproduce the reported best.
        let measured = evaluate(&model, &data.val, &[1]).unwrap().accuracies[0].1;
        assert_eq!(measured, outcome.best_val_top1);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let data = toy_dataset((4, 2, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = Model::new(&tiny_tgcn(), &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 1000,
            patience: 3,
            ..quick_config()
        };
        let outcome = train(&model, &data, &cfg, |_| {}).unwrap();
        assert!(outcome.epochs_run < 1000);
        assert!(outcome.epochs_run >= outcome.best_epoch);
        // After the best epoch come at most `patience` stale epochs.
        assert!(outcome.epochs_run - outcome.best_epoch <= 3);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let mut data = toy_dataset((2, 2, 0));
        data.train.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&tiny_tgcn(), &mut rng).unwrap();
        assert!(matches!(
            train(&model, &data, &quick_config(), |_| {}),
            Err(TrainError::EmptySplit(Split::Train))
        ));

        let mut data = toy_dataset((2, 2, 0));
        data.val.clear();
        assert!(matches!(
            train(&model, &data, &quick_config(), |_| {}),
            Err(TrainError::EmptySplit(Split::Val))
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = toy_dataset((2, 2, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&tiny_tgcn(), &mut rng).unwrap();
        for bad in [
            TrainConfig {
                epochs: 0,
                ..quick_config()
            },
            TrainConfig {
                batch_size: 0,
                ..quick_config()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..quick_config()
            },
        ] {
            assert!(matches!(
                train(&model, &data, &bad, |_| {}),
                Err(TrainError::BadConfig(_))
            ));
        }
    }

    #[test]
    fn top_k_accuracy_is_monotone_in_k() {
        let data = toy_dataset((3, 3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = Model::new(&tiny_gru(), &mut rng).unwrap();
        let report = evaluate(&model, &data.test, &[1, 2]).unwrap();
        assert_eq!(report.samples, 6);
        let a1 = report.accuracy_at(1).unwrap();
        let a2 = report.accuracy_at(2).unwrap();
        assert!(a1 <= a2);
        // Two classes: top-2 covers everything.
        assert_eq!(a2, 1.0);
    }

    #[test]
    fn evaluation_of_nothing_reports_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::new(&tiny_gru(), &mut rng).unwrap();
        let report = evaluate(&model, &[], &[1, 5]).unwrap();
        assert_eq!(report.samples, 0);
        assert_eq!(report.accuracies, vec![(1, 0.0), (5, 0.0)]);
    }

    #[test]
    fn loaded_dataset_maps_splits() {
        let data = toy_dataset((1, 2, 3));
        assert_eq!(data.split(Split::Train).len(), 2);
        assert_eq!(data.split(Split::Val).len(), 4);
        assert_eq!(data.split(Split::Test).len(), 6);
    }
}
