//! `signpose`: the pipeline end to end, one subcommand per stage.
//!
//! Exit codes: 0 on success, 1 on validation problems (bad flags, malformed
//! domain data, a failed gradient check), 2 on I/O problems. Commands never
//! modify their input files; everything written goes to `--out` style paths.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use signpose::curation::CurationError;
use signpose::data::DataError;
use signpose::gradcheck::GradCheckError;
use signpose::models::{ModelError, ModelKind};
use signpose::train::TrainError;

#[derive(Parser)]
#[command(
    name = "signpose",
    version,
    about = "Pose-based sign language recognition toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign train/val/test splits to every instance, 4:1:1 per gloss
    Split(SplitArgs),
    /// Keep the glosses with the most samples
    Subset(SubsetArgs),
    /// Summarize a manifest
    Stats(StatsArgs),
    /// Generate a synthetic pose corpus
    Synth(SynthArgs),
    /// Group face embeddings into signer identities
    ClusterSigners(ClusterSignersArgs),
    /// Train a classifier and save its best checkpoint
    Train(TrainArgs),
    /// Measure top-k accuracy of a checkpoint on one split
    Eval(EvalArgs),
    /// Rank glosses for a single pose file
    Predict(PredictArgs),
    /// Verify backpropagation against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// JSON on stdout
    Structured,
    /// Human-readable text
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Tgcn,
    Gru,
}

impl From<ModelArg> for ModelKind {
    fn from(arg: ModelArg) -> ModelKind {
        match arg {
            ModelArg::Tgcn => ModelKind::Tgcn,
            ModelArg::Gru => ModelKind::Gru,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for signpose::data::Split {
    fn from(arg: SplitArg) -> signpose::data::Split {
        match arg {
            SplitArg::Train => signpose::data::Split::Train,
            SplitArg::Val => signpose::data::Split::Val,
            SplitArg::Test => signpose::data::Split::Test,
        }
    }
}

#[derive(clap::Args)]
struct SplitArgs {
    /// Manifest to read (left untouched)
    #[arg(long)]
    manifest: PathBuf,
    /// Seed for the per-gloss shuffles
    #[arg(long)]
    seed: u64,
    /// Where to write the split manifest
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SubsetArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Number of glosses to keep
    #[arg(long)]
    size: usize,
    /// First drop glosses with fewer than this many videos
    #[arg(long)]
    min_videos: Option<usize>,
    /// Then drop sign variations with fewer than this many examples
    #[arg(long)]
    min_examples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pose directory; enables mean clip duration
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    glosses: usize,
    /// Instances per gloss
    #[arg(long, default_value_t = 12)]
    instances: usize,
    /// Frames per instance
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 6)]
    signers: usize,
    /// Gaussian coordinate noise, in pixels
    #[arg(long, default_value_t = 0.02)]
    noise_sd: f64,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_manifest: PathBuf,
    /// Directory for the generated pose files
    #[arg(long)]
    out_poses: PathBuf,
}

#[derive(clap::Args)]
struct ClusterSignersArgs {
    /// JSON list of {id, embedding} records
    #[arg(long)]
    embeddings: PathBuf,
    /// Euclidean distance below which two faces share a signer
    #[arg(long)]
    threshold: f64,
    /// Also write the assignments as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of pose files named <instance_id>.json
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    seed: u64,
    /// Where to write the best checkpoint
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    learning_rate: f64,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Training window, in frames
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Mirror training clips left-right with probability 1/2
    #[arg(long)]
    augment_flip: bool,
    /// Override the model's hidden width
    #[arg(long)]
    hidden: Option<usize>,
    /// Append one JSON record per epoch to this file
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Accuracy cutoffs, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    topk: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pose file for one clip
    #[arg(long)]
    pose: PathBuf,
    /// Detector box x,y,w,h; derived from visible keypoints when absent
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bbox: Option<Vec<f64>>,
    /// How many ranked glosses to print
    #[arg(long, default_value_t = 5)]
    topk: usize,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Keypoints / graph vertices
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

/// A command's terminal failure: what to print and which code to exit with.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: format!("{context}: {source}"),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Io { .. } | DataError::Json { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io { .. } | TrainError::Json { .. } => Failure {
                code: 2,
                message: e.to_string(),
            },
            TrainError::Data(inner) => inner.into(),
            other => Failure::validation(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<CurationError> for Failure {
    fn from(e: CurationError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<GradCheckError> for Failure {
    fn from(e: GradCheckError) -> Self {
        Failure::validation(e.to_string())
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Split(args) => commands::split(args),
        Command::Subset(args) => commands::subset(args),
        Command::Stats(args) => commands::stats(args),
        Command::Synth(args) => commands::synth(args),
        Command::ClusterSigners(args) => commands::cluster_signers(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help and --version are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
