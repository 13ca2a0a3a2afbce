//! The `sirenpose` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or schema, 3 numeric failure
//! (divergence or a failed gradient check). Diagnostics go to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::io::{self, Checkpoint, MetricsRow};
use crate::loss::LossConfig;
use crate::metrics::evaluate;
use crate::predictor::{CompositePredictor, PredictorConfig};
use crate::rng::Rng;
use crate::scene::{generate_chain_scene, SceneConfig};
use crate::trainer::{self, full_objective, TrainConfig};

/// Overrides the configured seed unless `--seed` is given.
pub const SEED_ENV: &str = "SIRENPOSE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "sirenpose", version, about = "Fit sinusoidal keypoint-trajectory networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a chain scene and write it as a dataset file.
    Generate {
        /// Scene configuration (JSON); omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a predictor to a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic parameter gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        probes: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reduce a training log to step, loss and EPE columns.
    ExportPlot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda_geo: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_sp: f64,
    /// Frequency factor of both the sine layers and the geometric term.
    #[arg(long, default_value_t = 30.0)]
    omega0: f64,
    /// Weight of the sine branch in the predictor output.
    #[arg(long, default_value_t = 0.1)]
    lambda_mix: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    /// Training log; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Schema { .. } => EXIT_IO,
        Error::Numeric(_) | Error::Diverged { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Flag, then `SIRENPOSE_SEED`, then `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> std::result::Result<u64, Failure> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(fallback),
    }
}

fn default_log_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".metrics.csv");
    PathBuf::from(name)
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Generate { config, out, seed } => {
            let mut cfg: SceneConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str(&text).map_err(|e| Error::Parse {
                        path: path.clone(),
                        line: e.line(),
                        column: e.column(),
                        msg: e.to_string(),
                    })?
                }
                None => SceneConfig::default(),
            };
            cfg.seed = resolve_seed(seed, cfg.seed)?;
            let seq = generate_chain_scene(&cfg)?;
            io::save_dataset(&seq, &out)?;
            eprintln!("wrote {} frames of {} keypoints to {}", seq.t(), seq.m(), out.display());
        }
        Command::Train(args) => train(args)?,
        Command::Eval { data, ckpt, out } => {
            let seq = io::load_dataset(&data)?;
            let ckpt = io::load_checkpoint(&ckpt)?;
            let pred = &ckpt.predictor;
            let (loss, _) = full_objective(pred, &seq, &ckpt.train.loss)?;
            let report = evaluate(&pred.predict_sequence(seq.t())?, &seq)?;
            let row = MetricsRow {
                step: ckpt.steps_completed,
                total: loss.total,
                recon: loss.recon_term,
                position: loss.position_term,
                geometric: loss.geometric_term,
                epe: report.epe,
                mse: report.mse,
                tc: report.temporal_consistency,
                ga: report.geometric_accuracy,
            };
            io::write_metrics_csv(&[row], &out)?;
            println!(
                "epe {} mse {} tc {} ga {} epe_score {} mse_score {}",
                report.epe,
                report.mse,
                report.temporal_consistency,
                report.geometric_accuracy,
                report.epe_score,
                report.mse_score
            );
        }
        Command::Gradcheck { probes, seed } => {
            let seed = resolve_seed(seed, 0)?;
            let seq = generate_chain_scene(&SceneConfig {
                seed,
                ..SceneConfig::default()
            })?;
            let pred = CompositePredictor::new(&PredictorConfig::default(), seq.m(), seq.d(), &mut Rng::new(seed))?;
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let report = trainer::gradcheck(&pred, &seq, &cfg, probes)?;
            println!("max relative error {:e} over {} probes", report.max_rel_error, report.probes.len());
            if report.max_rel_error >= GRADCHECK_TOLERANCE {
                return Err(Error::Numeric(format!(
                    "gradient check failed: {:e} >= {GRADCHECK_TOLERANCE:e}",
                    report.max_rel_error
                ))
                .into());
            }
        }
        Command::ExportPlot { log, out } => {
            let n = io::export_plot(&log, &out)?;
            eprintln!("wrote {n} rows to {}", out.display());
        }
    }
    Ok(())
}

fn train(args: TrainArgs) -> std::result::Result<(), Failure> {
    let seq = io::load_dataset(&args.data)?;
    let cfg = TrainConfig {
        lr: args.lr,
        batch_size: args.batch_size,
        max_steps: args.steps,
        seed: resolve_seed(args.seed, 0)?,
        loss: LossConfig {
            omega0: args.omega0,
            lambda_geo: args.lambda_geo,
            lambda_sp: args.lambda_sp,
        },
        log_every: args.log_every,
    };
    cfg.validate()?;
    let pred_cfg = PredictorConfig {
        omega0: args.omega0,
        lambda_mix: args.lambda_mix,
        ..PredictorConfig::default()
    };
    let pred = CompositePredictor::new(&pred_cfg, seq.m(), seq.d(), &mut Rng::new(cfg.seed))?;
    let log_path = args.log.unwrap_or_else(|| default_log_path(&args.out));

    let (pred, report) = match trainer::train(pred, &seq, &cfg) {
        Ok(done) => done,
        Err(Error::Diverged { step, total, report }) => {
            let rows: Vec<MetricsRow> = report.records.iter().map(MetricsRow::from).collect();
            // keep the log of a diverged run for inspection
            if let Err(e) = io::write_metrics_csv(&rows, &log_path) {
                eprintln!("warning: {e}");
            }
            return Err(Error::Diverged { step, total, report }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let rows: Vec<MetricsRow> = report.records.iter().map(MetricsRow::from).collect();
    io::write_metrics_csv(&rows, &log_path)?;
    let ckpt = Checkpoint {
        predictor: pred,
        train: cfg,
        steps_completed: report.steps_completed,
        final_metrics: report.final_metrics,
    };
    io::save_checkpoint(&ckpt, &args.out)?;
    if let Some(m) = report.final_metrics {
        println!(
            "steps {} epe {} tc {} ga {}",
            report.steps_completed, m.epe, m.temporal_consistency, m.geometric_accuracy
        );
    }
    Ok(())
}
