//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pipefuse_core::view_fusion::PairwiseMode;

/// Batch tool for multi-view GPR pipeline detection: synthesize scenes,
/// match per-view detections into 3D pipelines, evaluate against ground
/// truth, preprocess radargrams, and compare data footprints.
#[derive(Debug, Parser)]
#[command(name = "pipefuse", version, max_term_width = 100)]
pub struct Cli {
    /// JSON config file mirroring the run configuration; flags override
    /// file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for batch processing (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes with ground-truth detections.
    Synth(SynthArgs),
    /// Match per-view detections into 3D pipeline detections.
    Match(MatchArgs),
    /// Score a match report against ground truth.
    Eval(EvalArgs),
    /// Run the radargram preprocessing chain and report entropy.
    Preprocess(PreprocessArgs),
    /// Compare image-pipeline and volume-pipeline data footprints.
    Footprint(FootprintArgs),
    /// Time the matching pipeline on a synthetic batch.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of scenes to generate.
    #[arg(long, default_value_t = 1)]
    pub scenes: usize,

    /// Pipelines per scene.
    #[arg(long, default_value_t = 3)]
    pub pipes: usize,

    /// Scene extents in meters as X,Y,Z.
    #[arg(long, value_parser = parse_extents)]
    pub extents: Option<[f64; 3]>,

    /// Perturb ground-truth boxes with this per-edge pixel jitter.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,

    /// Also render one synthetic radargram per scene (raw f32 + JSON
    /// sidecar), suitable for `preprocess`.
    #[arg(long)]
    pub radargrams: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairwiseModeArg {
    /// Gate on min(B-C, B-D, C-D).
    AllThree,
    /// Gate on min(B-C, B-D) only.
    BcBd,
}

impl From<PairwiseModeArg> for PairwiseMode {
    fn from(v: PairwiseModeArg) -> Self {
        match v {
            PairwiseModeArg::AllThree => PairwiseMode::AllThree,
            PairwiseModeArg::BcBd => PairwiseMode::BcBdOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Detections files (JSON).
    #[arg(value_name = "DETECTIONS")]
    pub detections: Vec<PathBuf>,

    /// Directory of YOLO-style annotation files named
    /// `<scene>_<B|C|D>.txt` (alternative to JSON detections).
    #[arg(long)]
    pub yolo_dir: Option<PathBuf>,

    /// Class-map JSON translating YOLO class indices to view labels;
    /// required with --yolo-dir.
    #[arg(long)]
    pub class_map: Option<PathBuf>,

    /// Confidence threshold.
    #[arg(long)]
    pub confidence: Option<f64>,

    /// Within-view duplicate suppression (prediction IoU) threshold.
    #[arg(long)]
    pub prediction_iou: Option<f64>,

    /// Matching 3D-DIoU threshold.
    #[arg(long)]
    pub matching_threshold: Option<f64>,

    /// Which pairwise scores gate a triple.
    #[arg(long, value_enum)]
    pub pairwise_mode: Option<PairwiseModeArg>,

    /// Also emit score-histogram SVGs next to the report.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Match report to score.
    #[arg(long)]
    pub report: PathBuf,

    /// Ground-truth detections files (with truth annex).
    #[arg(long, value_name = "TRUTH", num_args = 1..)]
    pub truth: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Radargram header (JSON sidecar of the raw f32 data).
    #[arg(long)]
    pub input: PathBuf,

    /// Steps to apply, comma-separated subset of gain,background,lowpass.
    /// Applied in that fixed order regardless of flag order.
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<String>,

    /// Exponential gain constant, 1/ns.
    #[arg(long, default_value_t = pipefuse_core::signal_prep::DEFAULT_GAIN_PER_NS)]
    pub alpha: f64,

    /// Low-pass passband edge, Hz.
    #[arg(long, default_value_t = pipefuse_core::signal_prep::DEFAULT_LOWPASS_PASS_HZ)]
    pub pass_hz: f64,

    /// Low-pass stopband edge, Hz.
    #[arg(long, default_value_t = pipefuse_core::signal_prep::DEFAULT_LOWPASS_STOP_HZ)]
    pub stop_hz: f64,

    /// Gray levels for the entropy report.
    #[arg(long, default_value_t = pipefuse_core::signal_prep::DEFAULT_GRAY_LEVELS)]
    pub levels: u32,
}

#[derive(Debug, Args)]
pub struct FootprintArgs {
    /// Images per surveyed unit.
    #[arg(long, default_value_t = 1200)]
    pub images: u64,

    /// Stored size per image, decimal kB.
    #[arg(long, default_value_t = 250.0)]
    pub kb_per_image: f64,

    /// Image width in pixels.
    #[arg(long, default_value_t = 1620)]
    pub width: u64,

    /// Image height in pixels.
    #[arg(long, default_value_t = 760)]
    pub height: u64,

    /// Radar channels across the surveyed width.
    #[arg(long, default_value_t = 35)]
    pub channels: u64,

    /// Volume sampling positions per kilometer.
    #[arg(long, default_value_t = 20000)]
    pub samples_per_km: u64,

    /// Depth points per channel.
    #[arg(long, default_value_t = 2048)]
    pub depth_points: u64,

    /// Bytes per volume point.
    #[arg(long, default_value_t = 4.0)]
    pub bytes_per_point: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenes in the benchmark batch.
    #[arg(long, default_value_t = 200)]
    pub scenes: usize,

    /// Pipelines per scene.
    #[arg(long, default_value_t = 3)]
    pub pipes: usize,
}

fn parse_extents(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected X,Y,Z".into());
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| format!("invalid extent {p:?}"))?;
        if out[i] <= 0.0 {
            return Err("extents must be positive".into());
        }
    }
    Ok(out)
}
