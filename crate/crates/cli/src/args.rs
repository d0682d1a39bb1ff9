use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ghostgrid::fusion::{FusionConfig, FusionRule};
use ghostgrid::scene::Split;

#[derive(Debug, Parser)]
#[command(name = "ghostgrid", version, about = "Occlusion inference from observed driver behavior")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Key-value file of default flags (`key = value` per line); flags on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic intersection scenes.
    Gen(GenArgs),
    /// Convert a recorded track file to scenes.
    Ingest(IngestArgs),
    /// Write ground-truth and observed ego grids for every scene.
    Map(MapArgs),
    /// Train a driver sensor model.
    Train(TrainArgs),
    /// Run a driver sensor on every visible driver.
    Infer(InferArgs),
    /// Fuse driver sensor outputs into the ego grid for the top-k modes.
    Fuse(FuseArgs),
    /// Evaluate predictions and write a metrics table.
    Eval(EvalArgs),
    /// Render an occupancy grid as a PGM image.
    Render(RenderArgs),
    /// Time one inference and fusion step.
    Bench(BenchArgs),
}

/// Where to write the run manifest.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ManifestArgs {
    /// Manifest path; defaults to the primary output with `.manifest.json`.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total scenarios, split over behaviors in the default 1:2:1:1 mix
    /// (stopped, constant speed, decelerating, accelerating).
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub stopped: Option<usize>,
    #[arg(long)]
    pub constant: Option<usize>,
    #[arg(long)]
    pub decelerating: Option<usize>,
    #[arg(long)]
    pub accelerating: Option<usize>,
    /// Frames per scenario at 10 Hz.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Probability that a constant-speed driver has traffic ahead.
    #[arg(long)]
    pub traffic_fraction: Option<f64>,
    /// Probability that a decelerating driver has traffic ahead.
    #[arg(long)]
    pub decelerating_occupied: Option<f64>,
    /// Position jitter standard deviation, meters.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Output scene stream (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Track file with columns track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum number of sampled ego vehicles.
    #[arg(long, default_value_t = 100)]
    pub max_egos: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Csv,
    Pgm,
    Both,
}

impl GridFormat {
    pub fn csv(self) -> bool {
        self != GridFormat::Pgm
    }

    pub fn pgm(self) -> bool {
        self != GridFormat::Csv
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MapArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    pub format: GridFormat,
    /// Process at most this many scenes.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kmeans,
    Gmm,
    Cvae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Every non-ego driver with a full history.
    All,
    /// Only generator-labelled drivers.
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Driver,
    World,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Test,
    All,
}

impl Subset {
    pub fn split(self) -> Option<Split> {
        match self {
            Subset::Train => Some(Split::Train),
            Subset::Validation => Some(Split::Validation),
            Subset::Test => Some(Split::Test),
            Subset::All => None,
        }
    }
}

/// Dataset split over ego vehicles.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// Split file written by `train`.
    #[arg(long, value_name = "PATH", conflicts_with = "split_seed")]
    pub split: Option<PathBuf>,
    /// Recompute the split from the scene ids with this seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Scenes to use; requires a split unless `all`.
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub scenes: PathBuf,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the ego-vehicle split; ignored with `--split`.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Existing split file to train on.
    #[arg(long, value_name = "PATH")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Selection::All)]
    pub selection: Selection,
    #[arg(long, value_enum, default_value_t = Frame::Driver)]
    pub frame: Frame,
    /// Iteration cap for k-means and EM.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub kl_clamp: Option<f64>,
    #[arg(long)]
    pub crossover: Option<usize>,
    #[arg(long)]
    pub ramp: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Training trace CSV; defaults to the model path with `.trace.csv`.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenes: PathBuf,
    /// Per-driver priors (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the decoded grid of every class here.
    #[arg(long, value_name = "DIR")]
    pub grid_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    pub format: GridFormat,
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Dempster,
    Average,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FusionArgs {
    /// Discount applied to driver sensor probabilities.
    #[arg(long, default_value_t = 0.95)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Rule::Dempster)]
    pub rule: Rule,
    /// Number of joint mode assignments to fuse.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Maximum ego-to-driver cell center distance, meters.
    #[arg(long, default_value_t = 1.0)]
    pub tolerance: f64,
}

impl FusionArgs {
    pub fn config(&self) -> FusionConfig {
        FusionConfig {
            delta: self.delta,
            tolerance: self.tolerance,
            rule: match self.rule {
                Rule::Dempster => FusionRule::Dempster,
                Rule::Average => FusionRule::Average,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FuseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    pub format: GridFormat,
    /// Fuse only the scene at this index of the stream.
    #[arg(long)]
    pub scene: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Fused ego grids on the occluded cells the fusion made known.
    Scene,
    /// Decoded driver-view grids against the driver-view ground truth.
    Sensor,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Model files, one table row each.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["pred", "gt"])]
    pub model: Vec<PathBuf>,
    /// Row names for the models, in order; defaults to the model kinds.
    #[arg(long, value_delimiter = ',')]
    pub name: Vec<String>,
    #[arg(long, requires = "model")]
    pub scenes: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Level::Scene)]
    pub level: Level,
    /// Drivers evaluated at sensor level.
    #[arg(long, value_enum, default_value_t = Selection::All)]
    pub selection: Selection,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Predicted grids (OGM-CSV), paired in order with `--gt`.
    #[arg(long, value_delimiter = ',', requires = "gt")]
    pub pred: Vec<PathBuf>,
    /// Ground-truth grids (OGM-CSV).
    #[arg(long, value_delimiter = ',', requires = "pred")]
    pub gt: Vec<PathBuf>,
    /// Metrics table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// Grid in OGM-CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Timed steps per driver count.
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Driver counts of the benchmark fixtures.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
    pub drivers: Vec<usize>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Latency report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}
