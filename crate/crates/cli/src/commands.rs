//! One function per subcommand. Reports go to stdout, progress and errors to
//! stderr, files only to the paths named by `--out` flags.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use signpose::curation::{self, FaceEmbedding};
use signpose::data::synth::{generate, SynthConfig};
use signpose::data::{
    build_subset, filter_gloss_min_count, filter_variation_min_count, keypoint_bbox,
    normalize_frames, read_manifest, read_pose, split_manifest, write_manifest, write_pose, Split,
};
use signpose::gradcheck::{check_config, tiny_geometry, FD_TOLERANCE};
use signpose::models::{GruConfig, Model, ModelConfig, ModelKind, TgcnConfig};
use signpose::train::{
    evaluate, load_checkpoint, load_dataset, save_checkpoint, train as run_training, TrainConfig,
};

use crate::{
    ClusterSignersArgs, EvalArgs, Failure, Format, GradcheckArgs, PredictArgs, SplitArgs,
    StatsArgs, SubsetArgs, SynthArgs, TrainArgs,
};

/// Print a report line to stdout, shrugging off write failures (a closed
/// pipe on the report stream should not look like a command failure).
fn print_out(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn emit<T: Serialize>(format: Format, value: &T, plain: String) {
    match format {
        Format::Structured => {
            print_out(serde_json::to_string_pretty(value).expect("reports serialize"))
        }
        Format::Plain => print_out(plain),
    }
}

fn split_counts(manifest: &signpose::data::Manifest) -> [usize; 3] {
    let mut counts = [0; 3];
    for entry in &manifest.entries {
        for inst in &entry.instances {
            match inst.split {
                Some(Split::Train) => counts[0] += 1,
                Some(Split::Val) => counts[1] += 1,
                Some(Split::Test) => counts[2] += 1,
                None => {}
            }
        }
    }
    counts
}

pub fn split(args: SplitArgs) -> Result<(), Failure> {
    let manifest = read_manifest(&args.manifest)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let assigned = split_manifest(&manifest, &mut rng)?;
    write_manifest(&args.out, &assigned)?;
    let [train, val, test] = split_counts(&assigned);
    print_out(format!(
        "split {} instances into train/val/test = {}/{}/{} ({})",
        assigned.instance_count(),
        train,
        val,
        test,
        args.out.display()
    ));
    Ok(())
}

pub fn subset(args: SubsetArgs) -> Result<(), Failure> {
    let mut manifest = read_manifest(&args.manifest)?;
    if let Some(min) = args.min_videos {
        manifest = filter_gloss_min_count(&manifest, min);
    }
    if let Some(min) = args.min_examples {
        manifest = filter_variation_min_count(&manifest, min);
    }
    let subset = build_subset(&manifest, args.size)?;
    write_manifest(&args.out, &subset)?;
    print_out(format!(
        "kept {} glosses, {} instances ({})",
        subset.entries.len(),
        subset.instance_count(),
        args.out.display()
    ));
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let manifest = read_manifest(&args.manifest)?;
    let durations = match &args.poses {
        None => None,
        Some(dir) => {
            let mut map = HashMap::new();
            for entry in &manifest.entries {
                for inst in &entry.instances {
                    let pose = read_pose(&dir.join(format!("{}.json", inst.instance_id)))?;
                    map.insert(inst.instance_id.clone(), pose.duration_secs());
                }
            }
            Some(map)
        }
    };
    let stats = curation::compute_stats(&manifest, durations.as_ref())?;

    let mut plain = String::new();
    let _ = writeln!(plain, "glosses              {}", stats.glosses);
    let _ = writeln!(plain, "instances            {}", stats.instances);
    let _ = writeln!(
        plain,
        "instances per gloss  mean {:.2}, min {}, max {}",
        stats.mean_instances_per_gloss,
        stats.min_instances_per_gloss,
        stats.max_instances_per_gloss
    );
    let _ = writeln!(plain, "signers              {}", stats.signers);
    let _ = write!(
        plain,
        "splits               train {} / val {} / test {} / unassigned {}",
        stats.split_counts.train,
        stats.split_counts.val,
        stats.split_counts.test,
        stats.split_counts.unassigned
    );
    if let Some(d) = &stats.durations {
        let _ = write!(
            plain,
            "\ndurations            mean {:.2}s, min {:.2}s, max {:.2}s, intra-class std {:.2}s",
            d.mean_secs, d.min_secs, d.max_secs, d.intra_class_std_secs
        );
    }
    emit(args.format, &stats, plain);
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        glosses: args.glosses,
        instances_per_gloss: args.instances,
        frames: args.frames,
        signers: args.signers,
        noise_sd: args.noise_sd,
        fps: args.fps,
        seed: args.seed,
    };
    if cfg.glosses == 0 || cfg.instances_per_gloss == 0 || cfg.frames == 0 || cfg.signers == 0 {
        return Err(Failure::validation(
            "--glosses, --instances, --frames and --signers must be positive",
        ));
    }
    let (manifest, poses) = generate(&cfg);
    fs::create_dir_all(&args.out_poses)
        .map_err(|e| Failure::io(format!("creating {}", args.out_poses.display()), e))?;
    for pose in &poses {
        write_pose(
            &args.out_poses.join(format!("{}.json", pose.video_id)),
            pose,
        )?;
    }
    write_manifest(&args.out_manifest, &manifest)?;
    print_out(format!(
        "generated {} glosses x {} instances x {} frames: {} and {} pose files in {}",
        cfg.glosses,
        cfg.instances_per_gloss,
        cfg.frames,
        args.out_manifest.display(),
        poses.len(),
        args.out_poses.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct ClusterReport {
    clusters: usize,
    assignments: Vec<ClusterAssignment>,
}

#[derive(Serialize)]
struct ClusterAssignment {
    id: String,
    cluster: usize,
}

pub fn cluster_signers(args: ClusterSignersArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.embeddings)
        .map_err(|e| Failure::io(args.embeddings.display(), e))?;
    let embeddings: Vec<FaceEmbedding> = serde_json::from_str(&text).map_err(|e| Failure {
        code: 2,
        message: format!("invalid json in {}: {e}", args.embeddings.display()),
    })?;
    let vectors: Vec<Vec<f64>> = embeddings.iter().map(|e| e.embedding.clone()).collect();
    let assignment = curation::cluster_signers(&vectors, args.threshold)?;

    let report = ClusterReport {
        clusters: assignment.iter().copied().max().map_or(0, |m| m + 1),
        assignments: embeddings
            .iter()
            .zip(&assignment)
            .map(|(e, &cluster)| ClusterAssignment {
                id: e.id.clone(),
                cluster,
            })
            .collect(),
    };
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("reports serialize");
        fs::write(out, json + "\n").map_err(|e| Failure::io(out.display(), e))?;
    }
    let mut plain = String::new();
    for a in &report.assignments {
        let _ = writeln!(plain, "{}\t{}", a.id, a.cluster);
    }
    let _ = write!(
        plain,
        "{} embeddings in {} clusters",
        report.assignments.len(),
        report.clusters
    );
    emit(args.format, &report, plain);
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    model: &'static str,
    classes: usize,
    train_samples: usize,
    val_samples: usize,
    best_epoch: usize,
    best_val_top1: f64,
    epochs_run: usize,
    checkpoint: String,
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let manifest = read_manifest(&args.manifest)?;
    let dataset = load_dataset(&manifest, &args.poses, None)?;
    let classes = dataset.glosses.len();
    if classes < 2 {
        return Err(Failure::validation(format!(
            "training needs at least 2 glosses, the manifest has {classes}"
        )));
    }

    let kind = ModelKind::from(args.model);
    let config = match kind {
        ModelKind::Tgcn => ModelConfig::Tgcn(TgcnConfig {
            window: args.window,
            hidden: args.hidden.unwrap_or(2 * args.window),
            ..TgcnConfig::for_classes(classes)
        }),
        ModelKind::Gru => {
            let mut c = GruConfig::for_classes(classes);
            if let Some(hidden) = args.hidden {
                c.hidden = hidden;
            }
            ModelConfig::Gru(c)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let model = Model::new(&config, &mut rng)?;

    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        patience: args.patience,
        window: args.window,
        augment_flip: args.augment_flip,
        seed: args.seed,
    };

    let log_file = match &args.log {
        None => None,
        Some(path) => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Failure::io(path.display(), e))?,
        ),
    };
    let log_state = RefCell::new((log_file, None::<std::io::Error>));
    let outcome = run_training(&model, &dataset, &train_config, |epoch| {
        eprintln!(
            "epoch {:4}  train loss {:.6}  val top-1 {:.4}",
            epoch.epoch, epoch.mean_train_loss, epoch.val_top1
        );
        let mut state = log_state.borrow_mut();
        if state.1.is_some() {
            return;
        }
        if let Some(file) = &mut state.0 {
            let line = serde_json::to_string(epoch).expect("epoch records serialize");
            if let Err(e) = writeln!(file, "{line}") {
                state.1 = Some(e);
            }
        }
    })?;
    if let Some(e) = log_state.into_inner().1 {
        return Err(Failure::io(
            args.log.as_ref().expect("log errors need a log").display(),
            e,
        ));
    }

    save_checkpoint(&args.out, &model, &dataset.glosses, outcome.best_val_top1)?;
    let report = TrainReport {
        model: kind.name(),
        classes,
        train_samples: dataset.train.len(),
        val_samples: dataset.val.len(),
        best_epoch: outcome.best_epoch,
        best_val_top1: outcome.best_val_top1,
        epochs_run: outcome.epochs_run,
        checkpoint: args.out.display().to_string(),
    };
    emit(
        args.format,
        &report,
        format!(
            "trained {} on {} classes: best val top-1 {:.4} at epoch {} ({} epochs run); saved {}",
            report.model,
            report.classes,
            report.best_val_top1,
            report.best_epoch,
            report.epochs_run,
            report.checkpoint
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalCliReport {
    model: &'static str,
    split: &'static str,
    samples: usize,
    accuracies: Vec<(usize, f64)>,
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    if args.topk.iter().any(|&k| k == 0) {
        return Err(Failure::validation("--topk values must be positive"));
    }
    let loaded = load_checkpoint(&args.checkpoint)?;
    let manifest = read_manifest(&args.manifest)?;
    let dataset = load_dataset(&manifest, &args.poses, Some(&loaded.glosses))?;
    let split = Split::from(args.split);
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(Failure::validation(format!(
            "the {} split of {} is empty",
            split.name(),
            args.manifest.display()
        )));
    }
    let report = evaluate(&loaded.model, samples, &args.topk)?;

    let cli_report = EvalCliReport {
        model: loaded.model.kind().name(),
        split: split.name(),
        samples: report.samples,
        accuracies: report.accuracies.clone(),
    };
    let mut plain = format!(
        "{} on the {} split, {} samples",
        cli_report.model, cli_report.split, cli_report.samples
    );
    for (k, acc) in &report.accuracies {
        let _ = write!(plain, "\ntop-{k:<3} {acc:.4}");
    }
    emit(args.format, &cli_report, plain);
    Ok(())
}

#[derive(Serialize)]
struct PredictReport {
    video_id: String,
    predictions: Vec<RankedGloss>,
}

#[derive(Serialize)]
struct RankedGloss {
    rank: usize,
    class: usize,
    gloss: String,
    logit: f64,
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    let pose = read_pose(&args.pose)?;
    let bbox = match &args.bbox {
        Some(values) => {
            let [x, y, w, h] = values.as_slice() else {
                return Err(Failure::validation(
                    "--bbox needs exactly 4 values: x,y,w,h",
                ));
            };
            [*x, *y, *w, *h]
        }
        None => keypoint_bbox(&pose.frames)?,
    };
    let frames = normalize_frames(&pose.frames, bbox)?;
    let prediction = loaded.model.predict(&frames)?;

    let take = args.topk.min(loaded.glosses.len());
    let report = PredictReport {
        video_id: pose.video_id.clone(),
        predictions: prediction.ranking[..take]
            .iter()
            .enumerate()
            .map(|(i, &class)| RankedGloss {
                rank: i + 1,
                class,
                gloss: loaded.glosses[class].clone(),
                logit: prediction.logits[class],
            })
            .collect(),
    };
    let mut plain = format!("{}:", report.video_id);
    for p in &report.predictions {
        let _ = write!(plain, "\n{:3}. {} ({:+.4})", p.rank, p.gloss, p.logit);
    }
    emit(args.format, &report, plain);
    Ok(())
}

#[derive(Serialize)]
struct GradcheckCliReport {
    model: &'static str,
    checked: usize,
    max_rel_err: f64,
    tolerance: f64,
    passed: bool,
    params: Vec<ParamLine>,
}

#[derive(Serialize)]
struct ParamLine {
    name: String,
    entries: usize,
    max_rel_err: f64,
}

pub fn gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    let kind = ModelKind::from(args.model);
    let (config, frames_len) = tiny_geometry(kind, args.k, args.frames, args.classes);
    let report = check_config(&config, frames_len, args.seed)?;

    let passed = report.passes(FD_TOLERANCE);
    let cli_report = GradcheckCliReport {
        model: kind.name(),
        checked: report.checked,
        max_rel_err: report.max_rel_err,
        tolerance: FD_TOLERANCE,
        passed,
        params: report
            .params
            .iter()
            .map(|p| ParamLine {
                name: p.name.clone(),
                entries: p.entries,
                max_rel_err: p.max_rel_err,
            })
            .collect(),
    };
    let plain = format!(
        "{}: checked {} entries over {} parameters\nmax relative error {:.3e} (tolerance {:.0e}): {}",
        cli_report.model,
        cli_report.checked,
        cli_report.params.len(),
        cli_report.max_rel_err,
        cli_report.tolerance,
        if passed { "ok" } else { "FAILED" }
    );
    emit(args.format, &cli_report, plain);
    if !passed {
        return Err(Failure::validation(format!(
            "max relative error {:.3e} exceeds the {:.0e} tolerance",
            cli_report.max_rel_err, cli_report.tolerance
        )));
    }
    Ok(())
}
