mod commands;
mod config;
mod staging;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand};

use config::{path_value, EvalConfig, Layers, PhantomConfig, ReproConfig, SegmentConfig};

/// Bad command line or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "choroidseg", version, about = "Choroid segmentation for 3-D OCT volumes")]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment BM and CSI in one or more raw volumes.
    Segment(SegmentArgs),
    /// Generate a synthetic volume with ground-truth surfaces.
    Phantom(PhantomArgs),
    /// Compare segmented surfaces with a reference.
    Eval(EvalArgs),
    /// Repeatability statistics for paired measurements.
    Repro(ReproArgs),
    /// Show derived sizes and parameters for a geometry.
    Info(InfoArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set params.tps.enabled=false`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Raw 8-bit volumes; several inputs write one subdirectory each.
    inputs: Vec<PathBuf>,

    #[command(flatten)]
    common: Common,

    /// Preset name (cirrus, spectralis) or geometry file.
    #[arg(long)]
    geometry: Option<String>,

    /// Raw axis order and flips, e.g. `zxy` or `xzy:flip=z`.
    #[arg(long)]
    layout: Option<String>,

    /// Pipeline parameter file.
    #[arg(long)]
    params: Option<PathBuf>,

    /// Radius of the foveal thickness circle.
    #[arg(long)]
    radius_mm: Option<f64>,
}

#[derive(Args)]
struct PhantomArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long)]
    geometry: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Speckle seed; defaults to the seed.
    #[arg(long)]
    noise_seed: Option<u64>,

    /// Add speckle, vessels and stronger undulation.
    #[arg(long)]
    realistic: bool,

    /// Full phantom description file.
    #[arg(long)]
    spec: Option<PathBuf>,

    #[arg(long)]
    layout: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long)]
    test_bm: Option<PathBuf>,
    #[arg(long)]
    test_csi: Option<PathBuf>,
    #[arg(long)]
    ref_bm: Option<PathBuf>,
    #[arg(long)]
    ref_csi: Option<PathBuf>,
    /// Second grader's BM; averaged with --ref-bm.
    #[arg(long)]
    ref2_bm: Option<PathBuf>,
    /// Second grader's CSI; averaged with --ref-csi.
    #[arg(long)]
    ref2_csi: Option<PathBuf>,

    #[arg(long)]
    geometry: Option<String>,

    /// 1-based B-scan indices to evaluate, comma separated.
    #[arg(long, value_delimiter = ',')]
    mask_bscans: Vec<usize>,
}

#[derive(Args)]
struct ReproArgs {
    #[command(flatten)]
    common: Common,

    /// CSV of `subject,m1,m2` rows.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long)]
    geometry: Option<String>,

    #[arg(long)]
    params: Option<PathBuf>,
}

fn paths(v: &[PathBuf]) -> Option<toml::Value> {
    (!v.is_empty()).then(|| {
        toml::Value::Array(
            v.iter()
                .map(|p| toml::Value::String(p.display().to_string()))
                .collect(),
        )
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| UsageError(e.to_string()))?;
    }
    match cli.command {
        Command::Segment(a) => {
            let c: SegmentConfig = Layers::new()
                .file(a.common.config.as_deref())?
                .nested_file("params", a.params.as_deref())?
                .assignments(&a.common.set)?
                .set("inputs", paths(&a.inputs))
                .set("geometry", a.geometry)
                .set("layout", a.layout)
                .set("radius_mm", a.radius_mm)
                .set("out_dir", path_value(&a.common.out_dir))
                .build()?;
            commands::segment(&c)
        }
        Command::Phantom(a) => {
            let c: PhantomConfig = Layers::new()
                .file(a.common.config.as_deref())?
                .nested_file("spec", a.spec.as_deref())?
                .assignments(&a.common.set)?
                .set("geometry", a.geometry)
                .set("seed", a.seed.map(|s| s as i64))
                .set("noise_seed", a.noise_seed.map(|s| s as i64))
                .set("realistic", a.realistic.then_some(true))
                .set("layout", a.layout)
                .set("out_dir", path_value(&a.common.out_dir))
                .build()?;
            commands::phantom(&c)
        }
        Command::Eval(a) => {
            let mask = (!a.mask_bscans.is_empty()).then(|| {
                toml::Value::Array(
                    a.mask_bscans
                        .iter()
                        .map(|&b| toml::Value::Integer(b as i64))
                        .collect(),
                )
            });
            let c: EvalConfig = Layers::new()
                .file(a.common.config.as_deref())?
                .assignments(&a.common.set)?
                .set("test_bm", path_value(&a.test_bm))
                .set("test_csi", path_value(&a.test_csi))
                .set("ref_bm", path_value(&a.ref_bm))
                .set("ref_csi", path_value(&a.ref_csi))
                .set("ref2_bm", path_value(&a.ref2_bm))
                .set("ref2_csi", path_value(&a.ref2_csi))
                .set("geometry", a.geometry)
                .set("mask_bscans", mask)
                .set("out_dir", path_value(&a.common.out_dir))
                .build()?;
            commands::eval(&c)
        }
        Command::Repro(a) => {
            let c: ReproConfig = Layers::new()
                .file(a.common.config.as_deref())?
                .assignments(&a.common.set)?
                .set("pairs", path_value(&a.pairs))
                .set("out_dir", path_value(&a.common.out_dir))
                .build()?;
            commands::repro(&c)
        }
        Command::Info(a) => {
            let c: SegmentConfig = Layers::new()
                .file(a.config.as_deref())?
                .nested_file("params", a.params.as_deref())?
                .assignments(&a.set)?
                .set("geometry", a.geometry)
                .build()?;
            print!("{}", commands::info(&c.geometry.resolve()?, &c.params)?);
            Ok(())
        }
    }
}

/// 1: usage or configuration, 2: input data, 3: segmentation or internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    use choroidseg::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e.root() {
                E::Config(_)
                | E::InvalidArgument(_)
                | E::Geometry(_)
                | E::Layout(_) => 1,
                E::Io { .. }
                | E::SizeMismatch { .. }
                | E::Csv(_)
                | E::LatticeMismatch(_)
                | E::Phantom(_)
                | E::PhantomOrdering { .. }
                | E::NotDivisible { .. }
                | E::Statistics(_) => 2,
                _ => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
