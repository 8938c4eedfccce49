//! Command-line surface. `run` returns the process exit code.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "facepipe", version, about = "Template-based face verification toolkit")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel scoring (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Learn a triplet embedding projection.
    Train(TrainArgs),
    /// Apply a projection to embeddings.
    Project(ProjectArgs),
    /// Pool template members into one vector per template.
    Pool(PoolArgs),
    /// Build gallery x probe similarity matrices.
    Score(ScoreArgs),
    /// Weighted sum of similarity matrices.
    Fuse(FuseArgs),
    /// Associate detections into tracklets.
    Associate(AssociateArgs),
    /// Train a cascaded landmark regressor on the synthetic shape corpus.
    LandmarksTrain(LandmarksTrainArgs),
    /// Predict landmarks and the alignment transform for one face.
    LandmarksPredict(LandmarksPredictArgs),
    /// Compute ROC, CMC and open-set metrics over protocol splits.
    Evaluate(EvaluateArgs),
    /// Tabulate one or more summary files.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthCommand {
    /// Labelled embedding clusters with templates and a split protocol.
    Clusters(SynthClustersArgs),
    /// Render a tracking scenario script into detections and ground truth.
    Scenario(SynthScenarioArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthClustersArgs {
    #[arg(long, default_value_t = 20)]
    pub subjects: usize,
    #[arg(long, default_value_t = 40)]
    pub per_subject: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub intrinsic_dim: usize,
    #[arg(long, default_value_t = 0.25)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub media_per_subject: usize,
    #[arg(long, default_value_t = 0.0)]
    pub media_noise: f64,
    #[arg(long, default_value_t = 2)]
    pub templates_per_subject: usize,
    /// Give each template one video of this many frames plus single images.
    #[arg(long)]
    pub video_frames: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub splits: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Share of test subjects left out of the gallery (open-set impostors).
    #[arg(long, default_value_t = 0.0)]
    pub impostor_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthScenarioArgs {
    #[arg(long)]
    pub script: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Restrict training to the train templates of a protocol (needs --manifest).
    #[arg(long, requires = "manifest")]
    pub protocol: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Split index or `all`; only used with --protocol.
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Choose the output dimension among these by cross-validation instead of --dim.
    #[arg(long, value_delimiter = ',')]
    pub dim_candidates: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub negatives: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// `tse` or `tde`.
    #[arg(long, default_value = "tse")]
    pub objective: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub matrix: PathBuf,
    /// Keep raw projections instead of re-normalizing to unit length.
    #[arg(long)]
    pub no_renormalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TemplateArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// `media` or `average`.
    #[arg(long, default_value = "media")]
    pub pooling: String,
    /// Evaluation setup: 1 manual, 2 automatic, 3 semi-automatic.
    #[arg(long, default_value_t = 1)]
    pub setup: u8,
    /// Embedding indices (one per line) the automatic detector missed.
    #[arg(long)]
    pub undetected: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PoolArgs {
    #[command(flatten)]
    pub templates: TemplateArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoringArgs {
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[arg(long)]
    pub protocol: PathBuf,
    /// Split index or `all`.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// One projection for every split.
    #[arg(long, conflicts_with = "projection_dir")]
    pub projection: Option<PathBuf>,
    /// Directory holding `w_split{k}.vpw` per split.
    #[arg(long)]
    pub projection_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_renormalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FuseArgs {
    /// Two or more similarity CSVs with identical layout.
    #[arg(long, num_args = 2.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Per-input weights (default: equal).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value = "fused.csv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct AssociateArgs {
    #[arg(long)]
    pub detections: PathBuf,
    /// Embedding file indexed by the `appearance_ref` column.
    #[arg(long)]
    pub appearances: Option<PathBuf>,
    /// Ground truth `row,subject_id` for identity-switch counting.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Process at least this many frames.
    #[arg(long, default_value_t = 0)]
    pub frames: u64,
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5)]
    pub detect_every: u64,
    #[arg(long, default_value_t = 4)]
    pub termination: u32,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub det_confidence_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub high_confidence: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LandmarksTrainArgs {
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
    /// Pixel pairs sampled around each landmark.
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub feature_seed: u64,
    #[arg(long)]
    pub no_line_search: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct LandmarksPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Initial shape (`point_index,x,y`), usually the training mean shape.
    #[arg(long)]
    pub mean_shape: PathBuf,
    /// Raw little-endian f32 image (needs --width and --height).
    #[arg(long, requires_all = ["width", "height"], conflicts_with = "synthetic_index")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Use sample `i` of the synthetic corpus drawn with --seed.
    #[arg(long)]
    pub synthetic_index: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub feature_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Precomputed similarity CSVs (one per split); needs --manifest for labels.
    #[arg(long, num_args = 1.., conflicts_with_all = ["matrix_dir", "embeddings"])]
    pub matrix: Vec<PathBuf>,
    /// Directory of `similarity_split{k}.csv` files.
    #[arg(long, conflicts_with = "embeddings")]
    pub matrix_dir: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Score from embeddings instead of reading matrices (needs --protocol).
    #[arg(long, requires = "protocol")]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    #[arg(long, default_value = "all")]
    pub split: String,
    #[arg(long, default_value = "media")]
    pub pooling: String,
    #[arg(long, default_value_t = 1)]
    pub setup: u8,
    #[arg(long)]
    pub undetected: Option<PathBuf>,
    #[arg(long, conflicts_with = "projection_dir")]
    pub projection: Option<PathBuf>,
    #[arg(long)]
    pub projection_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_renormalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// `summary.csv` files to tabulate side by side.
    #[arg(long, num_args = 1.., required = true)]
    pub summary: Vec<PathBuf>,
    /// Column names (default: file parent directory names).
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let crate::Error::Divergence { trace, .. } = &e {
                eprintln!("iteration,loss_ema,active_fraction");
                for r in trace {
                    eprintln!("{},{},{}", r.iteration, r.loss_ema, r.active_fraction);
                }
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    commands::dispatch(cli)
}
