mod calibrate;
mod config;
mod detect;
mod eval;
mod synth;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Config;

/// Exit codes other than 0 (success) and 1 (anything else).
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const INSUFFICIENT_DATA: u8 = 3;
    pub const CALIBRATION_FAILED: u8 = 4;
    pub const COUNT_MISMATCH: u8 = 5;
    pub const UNPARSEABLE: u8 = 6;
}

/// Failures with a dedicated exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    InsufficientData(String),
    CalibrationFailed(String),
    CountMismatch(String),
    Unparseable(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            Failure::CalibrationFailed(m) => write!(f, "calibration failed: {m}"),
            Failure::CountMismatch(m) => write!(f, "count mismatch: {m}"),
            Failure::Unparseable(m) => write!(f, "unparseable input: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => exit::USAGE,
                Failure::InsufficientData(_) => exit::INSUFFICIENT_DATA,
                Failure::CalibrationFailed(_) => exit::CALIBRATION_FAILED,
                Failure::CountMismatch(_) => exit::COUNT_MISMATCH,
                Failure::Unparseable(_) => exit::UNPARSEABLE,
            };
        }
        if let Some(e) = cause.downcast_ref::<seahorizon::Error>() {
            return match e {
                seahorizon::Error::InvalidInput(_) => exit::USAGE,
                seahorizon::Error::InsufficientData(_) => exit::INSUFFICIENT_DATA,
                seahorizon::Error::CalibrationFailed(_) => exit::CALIBRATION_FAILED,
                seahorizon::Error::Parse { .. } | seahorizon::Error::Json(_) | seahorizon::Error::Csv(_) => {
                    exit::UNPARSEABLE
                }
                _ => 1,
            };
        }
    }
    1
}

/// Water segmentation and obstacle detection for surface vehicles, with
/// IMU-projected horizon priors and stereo verification.
#[derive(Parser, Debug)]
#[command(name = "seahorizon", version)]
struct Cli {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Camera-IMU calibration from a ground point cloud.
    Calibrate(CalibrateArgs),
    /// Detect obstacles in a frame sequence.
    Detect(DetectArgs),
    /// Render a synthetic stereo sequence with ground truth.
    Synth(SynthArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Per-stage timing of the mono and stereo pipelines.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// `x,y,z` CSV of ground points in camera coordinates, meters.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// IMU log whose first reading is the static attitude; level when absent.
    #[arg(long)]
    imu: Option<PathBuf>,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    inlier_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    dist_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mono,
    Stereo,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SequenceArgs {
    /// Sequence root with `left/`, `right/`, `imu.csv`, `camera.json`, `stereo.json`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    left: Option<PathBuf>,
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long)]
    imu: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Calibration JSON from `calibrate`; overrides the camera document's rotations.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    stereo: Option<PathBuf>,
    /// Segmentation working grid as `COLSxROWS`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long)]
    theta_ncc: Option<f64>,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected COLSxROWS")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok([p(a)?, p(b)?])
}

impl SequenceArgs {
    fn apply(&self, cfg: &mut Config) {
        let p = &mut cfg.paths;
        for (dst, src) in [
            (&mut p.data, &self.data),
            (&mut p.left, &self.left),
            (&mut p.right, &self.right),
            (&mut p.imu, &self.imu),
            (&mut p.camera, &self.camera),
            (&mut p.calibration, &self.calibration),
            (&mut p.stereo, &self.stereo),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        if let Some(g) = self.grid {
            cfg.segmentation.grid = g;
        }
        if let Some(v) = self.max_iters {
            cfg.segmentation.max_iters = v;
        }
        if let Some(v) = self.min_area {
            cfg.detection.min_area = v;
        }
        if let Some(v) = self.theta_ncc {
            cfg.stereo.theta_ncc = v;
        }
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_enum, default_value = "stereo")]
    mode: Mode,
    #[command(flatten)]
    seq: SequenceArgs,
    /// Detections JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frame diagnostics JSON (timings, warm start, skipped frames).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scene description JSON; replaces the config's `synth` section.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Glitter clusters per view.
    #[arg(long)]
    glitter: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Detections JSON, optionally labelled as `METHOD=PATH`; repeatable.
    #[arg(long, required = true)]
    detections: Vec<String>,
    /// Sequence root supplying `annotations/` and `camera.json`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Annotation root with `left/` and `right/` subdirectories.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Image height for edge normalization; read from the camera document when absent.
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    iou: Option<f64>,
    /// Directory receiving `report.json` and `report.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    seq: SequenceArgs,
    /// Only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Write the timing table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate(a) => {
            if a.cloud.is_some() {
                cfg.paths.cloud = a.cloud;
            }
            if a.imu.is_some() {
                cfg.paths.imu = a.imu;
            }
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            let c = &mut cfg.calibration;
            c.inlier_tol = a.inlier_tol.unwrap_or(c.inlier_tol);
            c.max_iters = a.max_iters.unwrap_or(c.max_iters);
            c.dist_threshold = a.dist_threshold.unwrap_or(c.dist_threshold);
            cfg.seed = a.seed.or(cfg.seed);
            calibrate::run(&cfg)
        }
        Command::Detect(a) => {
            a.seq.apply(&mut cfg);
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            if a.diagnostics.is_some() {
                cfg.paths.diagnostics = a.diagnostics;
            }
            detect::run(&cfg, a.mode)
        }
        Command::Synth(a) => {
            if let Some(p) = &a.scene {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("cannot read scene {}: {e}", p.display())))?;
                cfg.synth = serde_json::from_str(&text)
                    .map_err(|e| Failure::Usage(format!("invalid scene {}: {e}", p.display())))?;
            }
            cfg.seed = a.seed.or(cfg.seed);
            if let Some(s) = cfg.seed {
                cfg.synth.seed = s;
            }
            cfg.synth.frames = a.frames.unwrap_or(cfg.synth.frames);
            cfg.synth.glitter.count = a.glitter.unwrap_or(cfg.synth.glitter.count);
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            synth::run(&cfg)
        }
        Command::Eval(a) => {
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            if a.annotations.is_some() {
                cfg.paths.annotations = a.annotations;
            }
            if a.camera.is_some() {
                cfg.paths.camera = a.camera;
            }
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            cfg.eval.iou_threshold = a.iou.unwrap_or(cfg.eval.iou_threshold);
            eval::run(&cfg, &a.detections, a.height)
        }
        Command::Bench(a) => {
            a.seq.apply(&mut cfg);
            if a.out.is_some() {
                cfg.paths.output = a.out;
            }
            detect::bench(&cfg, a.frames)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
