//! `definetti`: finite-n ensembles, their reductions and de Finetti limits.
//!
//! Structure comes from a JSON config; flags only override the seed, the
//! sample count and the output directory. Every successful run writes its
//! artifacts plus `manifest.json` into the output directory.

mod config;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Command, RunConfig, VerifyConfig, VerifyKind};
use run::{CliError, EXIT_INTERRUPTED, EXIT_OK, EXIT_THRESHOLD, EXIT_VALIDATION};

/// Overrides the rayon worker count.
const THREADS_ENV: &str = "DEFINETTI_THREADS";

static CANCEL: AtomicBool = AtomicBool::new(false);
static INTERRUPTS: AtomicUsize = AtomicUsize::new(0);

#[derive(Parser)]
#[command(name = "definetti", version, about = "Bosonic de Finetti limits of finite-n ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reduce the n-particle ensemble to m particles.
    Reduce(Common),
    /// Compute a limit state.
    Limit(Common),
    /// Trace distances to the limit along n_list.
    Sweep(Common),
    /// Numerical checks with pass/fail thresholds.
    Verify {
        #[arg(value_enum)]
        kind: VerifyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimate of a de Finetti mixture.
    Sample(Common),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VerifyArg {
    Claim,
    Series,
    FreeEnergy,
}

impl From<VerifyArg> for VerifyKind {
    fn from(v: VerifyArg) -> Self {
        match v {
            VerifyArg::Claim => VerifyKind::Claim,
            VerifyArg::Series => VerifyKind::Series,
            VerifyArg::FreeEnergy => VerifyKind::FreeEnergy,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(cmd: &Cmd) -> Result<(RunConfig, PathBuf), CliError> {
    let (command, verify, common) = match cmd {
        Cmd::Reduce(c) => (Command::Reduce, None, c),
        Cmd::Limit(c) => (Command::Limit, None, c),
        Cmd::Sweep(c) => (Command::Sweep, None, c),
        Cmd::Sample(c) => (Command::Sample, None, c),
        Cmd::Verify { kind, common } => (Command::Verify, Some(VerifyKind::from(*kind)), common),
    };
    let path = common.config.clone();
    let fail = |msg: String| CliError::validation(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(&path).map_err(|e| fail(e.to_string()))?;
    let mut cfg = RunConfig::parse(&text).map_err(fail)?;
    if let Some(c) = cfg.command {
        if c != command {
            let name = |c: Command| serde_json::to_string(&c).expect("unit variant");
            return Err(fail(format!("config is for {}, not {}", name(c), name(command))));
        }
    }
    cfg.command = Some(command);
    if let Some(kind) = verify {
        match &mut cfg.verify {
            Some(v) if v.kind != kind => {
                return Err(fail(format!("verify.kind is {}, not {}", v.kind.as_str(), kind.as_str())));
            }
            Some(_) => {}
            None => cfg.verify = Some(VerifyConfig { kind, j: 1, order: 6, perturbations: 20 }),
        }
    }
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(samples) = common.samples {
        cfg.mc.samples = samples;
    }
    if let Some(out) = &common.out {
        cfg.output.path = out.clone();
    }
    if matches!(command, Command::Limit | Command::Sweep) {
        cfg.limit = Some(cfg.resolved_limit());
    }
    Ok((cfg, path))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .parse()
        .map_err(|_| CliError::validation(format!("{THREADS_ENV}={value} is not a worker count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::validation(format!("{THREADS_ENV}: {e}")))
}

fn write_outputs(cfg: &RunConfig, outcome: &run::Outcome) -> std::io::Result<PathBuf> {
    let dir = &cfg.output.path;
    fs::create_dir_all(dir)?;
    for a in &outcome.artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let status = match outcome.passed {
        Some(false) => "threshold_failed",
        _ if outcome.truncated => "truncated",
        _ => "ok",
    };
    let manifest = json!({
        "tool": "definetti",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.mc.seed,
        "samples": cfg.mc.samples,
        "tolerances": outcome.tolerances,
        "status": status,
        "truncated": outcome.truncated,
        "artifacts": outcome.artifacts.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(),
        "summary": outcome.summary,
        "timestamp": timestamp,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    let path = dir.join("manifest.json");
    fs::write(&path, bytes)?;
    Ok(path)
}

fn real_main() -> Result<i32, CliError> {
    let cli = Cli::parse();
    let (cfg, config_path) = resolve(&cli.command)?;
    configure_threads()?;
    ctrlc::set_handler(|| {
        if INTERRUPTS.fetch_add(1, Ordering::SeqCst) > 0 {
            std::process::exit(EXIT_INTERRUPTED);
        }
        CANCEL.store(true, Ordering::SeqCst);
    })
    .map_err(|e| CliError { code: run::EXIT_FAILURE, message: e.to_string() })?;

    let outcome = run::execute(&cfg, &CANCEL)
        .map_err(|e| CliError { code: e.code, message: format!("{}: {}", config_path.display(), e.message) })?;
    let manifest = write_outputs(&cfg, &outcome).map_err(|e| CliError {
        code: run::EXIT_FAILURE,
        message: format!("{}: {e}", cfg.output.path.display()),
    })?;
    eprintln!("wrote {}", manifest.display());
    Ok(match outcome.passed {
        Some(false) => EXIT_THRESHOLD,
        _ if outcome.truncated => EXIT_INTERRUPTED,
        _ => EXIT_OK,
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.code == 0 { EXIT_VALIDATION } else { e.code };
            ExitCode::from(code as u8)
        }
    }
}
