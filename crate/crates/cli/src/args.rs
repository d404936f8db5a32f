use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pvnext_core::dataio::{DropCenter, MotionClass, SyntheticSpec};
use pvnext_core::imitator::MotionSign;
use pvnext_core::model::ModelConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pvnext", version, about = "Point cloud video classification with one-step queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic motion dataset as a PCV file.
    Synth(SynthArgs),
    /// Train on the first half of a stratified split and write a checkpoint.
    Train(TrainArgs),
    /// Accuracy and confusion matrix on the held-out half.
    Eval(EvalArgs),
    /// Chamfer distance of imitator-advected groups against the next frame.
    ImitatorEval(ImitatorEvalArgs),
    /// Time and count the one-step and dense pipelines.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PipelineArg {
    Onestep,
    Dense,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CenterArg {
    PerFrame,
    PerVideo,
}

impl From<CenterArg> for DropCenter {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::PerFrame => DropCenter::PerFrame,
            CenterArg::PerVideo => DropCenter::PerVideo,
        }
    }
}

fn parse_sign(s: &str) -> Result<MotionSign, String> {
    match s {
        "+1" | "1" => Ok(MotionSign::Forward),
        "-1" => Ok(MotionSign::Reverse),
        _ => Err(format!("expected +1 or -1, got `{s}`")),
    }
}

fn parse_class(s: &str) -> Result<MotionClass, String> {
    s.trim().parse::<MotionClass>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "micro")]
    pub preset: String,
    #[arg(long, value_enum, default_value = "on")]
    pub imitator: Toggle,
    #[arg(long, value_parser = parse_sign, allow_hyphen_values = true, default_value = "+1")]
    pub motion_sign: MotionSign,
    #[arg(long, default_value_t = 3)]
    pub imitator_k: usize,
}

impl ModelArgs {
    pub fn config(&self, num_classes: usize) -> CliResult<ModelConfig> {
        let mut cfg = ModelConfig::preset(&self.preset, num_classes)?;
        cfg.imitator_enabled = self.imitator == Toggle::On;
        cfg.motion_sign = self.motion_sign;
        cfg.imitator_k = self.imitator_k;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated motion classes, in label order.
    #[arg(long, value_parser = parse_class, value_delimiter = ',',
          default_value = "static,translate_x,translate_y,rotate_z,oscillate_scale,zigzag")]
    pub classes: Vec<MotionClass>,
    #[arg(long, default_value_t = 128)]
    pub points: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 40)]
    pub videos_per_class: usize,
    #[arg(long, default_value_t = 0.002)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub parts: usize,
    #[arg(long, default_value_t = 0.003)]
    pub part_spread: f64,
    #[arg(long, default_value_t = 0.4)]
    pub part_separation: f64,
}

impl SynthArgs {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes.clone(),
            n_points: self.points,
            t_frames: self.frames,
            videos_per_class: self.videos_per_class,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            parts: self.parts,
            part_spread: self.part_spread,
            part_separation: self.part_separation,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV; defaults to the checkpoint path with `.csv` appended.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Compute per-frame geometry on all cores.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Confusion matrix CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Split and sampling seed used for training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply local occlusion with this drop ratio before inference.
    #[arg(long)]
    pub occlude_ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub occlude_seed: u64,
    #[arg(long, value_enum, default_value = "per-frame")]
    pub occlude_center: CenterArg,
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ImitatorEvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional checkpoint whose config digest must match the model flags.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only evaluate videos with these labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Benchmark the first video of this dataset instead of a synthetic one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "msr")]
    pub preset: String,
    #[arg(long, value_enum, default_value = "on")]
    pub imitator: Toggle,
    #[arg(long, value_parser = parse_sign, allow_hyphen_values = true, default_value = "+1")]
    pub motion_sign: MotionSign,
    #[arg(long, default_value_t = 3)]
    pub imitator_k: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub pipeline: PipelineArg,
    #[arg(long, default_value_t = 1)]
    pub delta_t: usize,
    #[arg(long, default_value_t = 2048)]
    pub points: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow per-frame work on all cores; timing defaults to one thread.
    #[arg(long)]
    pub parallel: bool,
}

impl BenchArgs {
    pub fn model(&self) -> ModelArgs {
        ModelArgs {
            preset: self.preset.clone(),
            imitator: self.imitator,
            motion_sign: self.motion_sign,
            imitator_k: self.imitator_k,
        }
    }
}

pub fn check_ratio(r: f64) -> CliResult<f64> {
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(CliError::Config(format!("--occlude-ratio must lie in (0, 1), got {r}")))
    }
}
