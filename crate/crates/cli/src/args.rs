use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bdk_core::boundary::Space;
use bdk_core::editor::EditMode;
use bdk_core::model::Optimizer;
use bdk_core::synth::Attribute;
use bdk_core::trajectory::{Mode, Source};

#[derive(Debug, Parser, Serialize)]
#[command(name = "bdk", version, about = "Diffusion latent geometry, mixing-step search and boundary editing")]
pub struct Cli {
    /// Output directory [default: $BDK_OUT_DIR, else ./bdk-out]
    #[arg(long, global = true, env = crate::OUT_DIR_ENV)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a labeled sprite dataset.
    GenData(GenData),
    /// Train a noise predictor on the desk schedule.
    Train(Train),
    /// Record the radius along one denoising walk.
    RadiusScan(RadiusScan),
    /// Detect t_m on all four {sampled, inverted} × {stochastic, deterministic} walks.
    FindMixing(FindMixing),
    /// Invert images to t_m and dump the latents.
    Invert(Invert),
    /// Invert to T and denoise back deterministically.
    Reconstruct(Reconstruct),
    /// Fit an attribute boundary on latents at t_m.
    FitBoundary(FitBoundary),
    /// Held-out accuracy of saved boundaries.
    EvalBoundary(EvalBoundary),
    /// Single-step boundary-guided edit of real images.
    Edit(Edit),
    /// Unconditional samples.
    Sample(Sample),
    /// Editing-strength sweep along one boundary.
    Sweep(Sweep),
    /// Pass/fail table of the geometry lemmas.
    VerifyGeometry(Verify),
    /// Pass/fail table of the Markov-chain mixing machinery.
    VerifyMixing(Verify),
    /// Summarize every manifest in a directory.
    Report(Report),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::RadiusScan(_) => "radius-scan",
            Command::FindMixing(_) => "find-mixing",
            Command::Invert(_) => "invert",
            Command::Reconstruct(_) => "reconstruct",
            Command::FitBoundary(_) => "fit-boundary",
            Command::EvalBoundary(_) => "eval-boundary",
            Command::Edit(_) => "edit",
            Command::Sample(_) => "sample",
            Command::Sweep(_) => "sweep",
            Command::VerifyGeometry(_) => "verify-geometry",
            Command::VerifyMixing(_) => "verify-mixing",
            Command::Report(_) => "report",
        }
    }
}

/// Model and image inputs shared by most commands.
#[derive(Debug, Args, Serialize)]
pub struct Inputs {
    /// Checkpoint file [default: the built-in toy checkpoint]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset file [default: sprites generated from --seed]
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceArg {
    Epsilon,
    H,
    Both,
}

impl SpaceArg {
    pub fn spaces(self) -> Vec<Space> {
        match self {
            SpaceArg::Epsilon => vec![Space::Epsilon],
            SpaceArg::H => vec![Space::H],
            SpaceArg::Both => vec![Space::Epsilon, Space::H],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    Stochastic,
    Deterministic,
    Mixed,
}

impl From<WalkMode> for Mode {
    fn from(m: WalkMode) -> Self {
        match m {
            WalkMode::Stochastic => Mode::Stochastic,
            WalkMode::Deterministic => Mode::Deterministic,
            WalkMode::Mixed => Mode::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceArg {
    Sampled,
    Inverted,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Sampled => Source::Sampled,
            SourceArg::Inverted => Source::Inverted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditModeArg {
    SetDistance,
    Additive,
}

impl From<EditModeArg> for EditMode {
    fn from(m: EditModeArg) -> Self {
        match m {
            EditModeArg::SetDistance => EditMode::SetDistance,
            EditModeArg::Additive => EditMode::Additive,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeArg {
    Marker,
    Stripes,
    Intensity,
}

impl From<AttributeArg> for Attribute {
    fn from(a: AttributeArg) -> Self {
        match a {
            AttributeArg::Marker => Attribute::Marker,
            AttributeArg::Stripes => Attribute::Stripes,
            AttributeArg::Intensity => Attribute::Intensity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenData {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub side: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = bdk_core::synth::DEFAULT_PIXEL_NOISE)]
    pub pixel_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Defaults reproduce the built-in checkpoint bit for bit.
#[derive(Debug, Args, Serialize)]
pub struct Train {
    /// Training set [default: --n sprites generated with seed 0]
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Stochasticity of p_s (1 = DDPM-like).
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Minibatch and noise seed; initialization uses seed 0.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct RadiusScan {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum, default_value_t = SourceArg::Sampled)]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value_t = WalkMode::Stochastic)]
    pub mode: WalkMode,
    /// Needed with --mode mixed.
    #[arg(long)]
    pub tm: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Inversion steps for --source inverted [default: T]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    /// Denoising steps [default: T]
    #[arg(long)]
    pub steps_gen: Option<usize>,
    /// Detection threshold in 12,288-dimensional units.
    #[arg(long, default_value_t = bdk_core::mixing::REFERENCE_THRESHOLD)]
    pub threshold: f64,
    /// Also write every recorded state to trajectories.csv.
    #[arg(long)]
    pub dump: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FindMixing {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Detection threshold in 12,288-dimensional units.
    #[arg(long, default_value_t = bdk_core::mixing::REFERENCE_THRESHOLD)]
    pub threshold: f64,
    /// Compare |Δr| directly against --threshold.
    #[arg(long)]
    pub raw: bool,
    /// Steps of the inversion and denoising plans [default: T]
    #[arg(long)]
    pub steps_gen: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Invert {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub tm: usize,
    /// [default: --tm]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    #[arg(long, value_enum, default_value_t = SpaceArg::Epsilon)]
    pub space: SpaceArg,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Reconstruct {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// [default: T]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitBoundary {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum)]
    pub attribute: AttributeArg,
    #[arg(long)]
    pub tm: usize,
    #[arg(long, value_enum, default_value_t = SpaceArg::Epsilon)]
    pub space: SpaceArg,
    /// Latents to fit from (80/20 split).
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// [default: --tm]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub svm_epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lambda: f64,
    /// Fit a hyperplane through the origin (d(x) = nᵀx).
    #[arg(long)]
    pub no_bias: bool,
    /// Training-set sizes for the held-out accuracy sweep; give the flag
    /// without values to skip it.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "10,20,40,80")]
    pub sweep_sizes: Vec<usize>,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalBoundary {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, required = true)]
    pub boundary: Vec<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// [default: the boundary's t_m]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED + 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Edit {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Boundary files, applied in order.
    #[arg(long, required = true)]
    pub boundary: Vec<PathBuf>,
    /// Must match every boundary's t_m [default: the boundaries' t_m]
    #[arg(long)]
    pub tm: Option<usize>,
    /// One strength for all boundaries, or one per boundary.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub zeta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = EditModeArg::SetDistance)]
    pub mode: EditModeArg,
    /// Send every latent to the opposite side at distance |ζ|.
    #[arg(long)]
    pub flip: bool,
    /// Number of steps h edits are injected at (h boundaries only).
    #[arg(long, default_value_t = 1)]
    pub h_steps: usize,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// [default: t_m]
    #[arg(long)]
    pub steps_inv: Option<usize>,
    /// [default: t_m]
    #[arg(long)]
    pub steps_gen: Option<usize>,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED + 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Sample {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WalkMode::Stochastic)]
    pub mode: WalkMode,
    /// Needed with --mode mixed.
    #[arg(long)]
    pub tm: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// [default: T]
    #[arg(long)]
    pub steps_gen: Option<usize>,
    /// Also write every state to trajectories.csv, one row per coordinate.
    #[arg(long)]
    pub dump: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Sweep {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub boundary: PathBuf,
    #[arg(long)]
    pub tm: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-3,-2,-1,0,1,2,3")]
    pub zeta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = EditModeArg::SetDistance)]
    pub mode: EditModeArg,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long)]
    pub steps_inv: Option<usize>,
    #[arg(long)]
    pub steps_gen: Option<usize>,
    /// Flag outputs whose nearest-neighbor score exceeds this multiple of
    /// the unedited one.
    #[arg(long, default_value_t = 1.5)]
    pub degradation: f64,
    #[arg(long, default_value_t = bdk_core::toy::EVAL_DATA_SEED + 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Verify {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Report {
    /// Directory holding manifests [default: the output directory]
    #[arg(long)]
    pub dir: Option<PathBuf>,
}
