//! `curvreg <command> [--flag value]...`

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::{estimator_suite, evaluate, invariance_suite, render_table, scan_csv, scan_decoder, CheckRow, ScanMode};
use crate::data::{self, Dataset, Role};
use crate::error::{Error, Result};
use crate::models::AutoencoderModel;
use crate::training::{grid_search, load_datasets, train_on, ExperimentConfig};

/// Success.
pub const EXIT_OK: i32 = 0;
/// Usage, configuration, input or output error.
pub const EXIT_USAGE: i32 = 1;
/// Numerical failure: divergence, or a singular metric at every point.
pub const EXIT_NUMERICAL: i32 = 2;
/// A diagnostic suite reported a failed check.
pub const EXIT_PROPERTY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "curvreg", version, about = "Curvature of decoder manifolds and curvature-regularized autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataKind {
    Paraboloid,
    ParaboloidGrid,
    Sincurve,
    SincurveGrid,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        /// Number of points, or points per axis for grids.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a config file; runs a grid search when `alpha_grid` is set.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model on a clean and optionally a corrupted test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        corrupt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-point curvature of a model's decoder at the encoded test points.
    CurvatureScan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = ScanMode::Exact)]
        mode: ScanMode,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimator statistics against exact values.
    EstimatorCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Invariance of the curvature measures under reparametrization.
    InvarianceCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenData { kind, n, noise, seed, out } => {
            let d = gen_data(kind, n, noise, seed)?;
            write_file(&out, &data::to_csv_string(&d))?;
            println!("wrote {} points to {}", d.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Train { config, out } => train_cmd(&config, out),
        Command::Eval { model, clean, corrupt, out } => {
            let (m, bytes) = load_model(&model)?;
            let clean = data::read_csv(&clean, Some(m.ambient_dim()), Role::Test)?;
            let corrupt = corrupt
                .map(|p| data::read_csv(&p, Some(m.ambient_dim()), Role::Test))
                .transpose()?;
            let report = evaluate(&m, &bytes, &clean, corrupt.as_ref())?;
            report.write(&out)?;
            println!("clean2clean {:.6e}", report.clean2clean);
            if let Some(c) = report.corrupt2clean {
                println!("corrupt2clean {c:.6e}");
            }
            Ok(all_singular(report.curvature.iter().map(|r| r.singular)))
        }
        Command::CurvatureScan { model, test, mode, samples, seed, out } => {
            if mode == ScanMode::Estimated && samples == 0 {
                return Err(Error::InvalidSpec("estimated mode needs at least one sample".into()));
            }
            let (m, bytes) = load_model(&model)?;
            let test = data::read_csv(&test, Some(m.ambient_dim()), Role::Test)?;
            let latent = m.encode(&test.points)?;
            let rows = scan_decoder(&m, &latent, mode, samples, seed)?;
            let meta = format!(
                "mode={} samples={} seed={} model_sha256={} test={}",
                mode.name(),
                if mode == ScanMode::Exact { 0 } else { samples },
                seed,
                super::sha256_hex(&bytes),
                test.provenance
            );
            write_file(&out, &scan_csv(&rows, m.latent_dim(), mode, &meta))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(all_singular(rows.iter().map(|r| r.singular)))
        }
        Command::EstimatorCheck { seed, tolerance_scale } => {
            report_suite("estimator-check", estimator_suite(seed, tolerance_scale)?)
        }
        Command::InvarianceCheck { seed, tolerance_scale } => {
            report_suite("invariance-check", invariance_suite(seed, tolerance_scale)?)
        }
    }
}

fn gen_data(kind: DataKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let grid = |clean: Dataset| if noise > 0.0 { data::corrupt(&clean, noise, seed) } else { Ok(clean) };
    match kind {
        DataKind::Paraboloid => data::gen_paraboloid(n, noise, seed),
        DataKind::Sincurve => data::gen_sincurve(n, noise, seed),
        DataKind::ParaboloidGrid => grid(data::paraboloid_testgrid(n)?),
        DataKind::SincurveGrid => grid(data::sincurve_testgrid(n)?),
    }
}

fn train_cmd(path: &Path, out: Option<PathBuf>) -> Result<i32> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = out {
        config.output.dir = dir;
    }
    let (train, val, test) = load_datasets(&config)?;
    let dir = config.output.dir.clone();
    match config.training.alpha_grid.clone() {
        Some(alphas) => {
            let grid = grid_search(&config, &alphas, &train, &val)?;
            grid.write(&dir)?;
            let best = grid.best_run();
            println!(
                "selected alpha {} (best validation {:.6e} at epoch {})",
                best.config.training.alpha, best.best_validation, best.best_epoch
            );
        }
        None => {
            let run = train_on(&config, &train, &val)?;
            run.write(&dir)?;
            println!("best validation {:.6e} at epoch {}", run.best_validation, run.best_epoch);
        }
    }
    data::write_csv(&test, &dir.join("test.csv"))?;
    println!("wrote run to {}", dir.display());
    Ok(EXIT_OK)
}

fn load_model(path: &Path) -> Result<(AutoencoderModel, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((AutoencoderModel::from_bytes(&bytes)?, bytes))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn all_singular(mut flags: impl Iterator<Item = bool>) -> i32 {
    if flags.all(|s| s) {
        eprintln!("error: the metric is singular at every point");
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

fn report_suite(title: &str, rows: Vec<CheckRow>) -> Result<i32> {
    print!("{}", render_table(title, &rows));
    Ok(if rows.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_PROPERTY })
}
