//! Command dispatch. Commands return their artifacts in memory; the caller
//! writes them together with the manifest.

use std::fmt;
use std::sync::atomic::AtomicBool;

use definetti_core::convergence::{self, SweepOptions};
use definetti_core::definetti::{self, DeFinettiWeight};
use definetti_core::ensembles::{self, EnsembleKind, EnsembleSpec};
use definetti_core::simplex::QuadratureOptions;
use definetti_core::{CMatrix, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, Format, RunConfig, VerifyKind};

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_THRESHOLD: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

pub const DEFAULT_CLAIM_J0_TOL: f64 = 1e-10;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Capacity { .. } => EXIT_CAPACITY,
            Error::Invalid(_) | Error::Mismatch(_) | Error::NotHermitian { .. } | Error::NotNormalized { .. } => {
                EXIT_VALIDATION
            }
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// `Some(false)` when a verify threshold failed.
    pub passed: Option<bool>,
    /// Part of the requested work was dropped after an interrupt.
    pub truncated: bool,
    pub summary: Value,
    /// Tolerances in effect, including defaults.
    pub tolerances: Value,
}

fn json_artifact(name: &str, value: &impl Serialize) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    bytes.push(b'\n');
    Artifact { name: format!("{name}.json"), bytes }
}

fn entries_csv(name: &str, m: &CMatrix) -> Artifact {
    let mut text = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            text.push_str(&format!(
                "{i},{j},{},{}\n",
                convergence::format_float(z.re),
                convergence::format_float(z.im)
            ));
        }
    }
    Artifact { name: format!("{name}.csv"), bytes: text.into_bytes() }
}

fn operator_artifact(cfg: &RunConfig, name: &str, value: &impl Serialize, m: &CMatrix) -> Artifact {
    match cfg.output.format {
        Some(Format::Csv) => entries_csv(name, m),
        _ => json_artifact(name, value),
    }
}

/// Single-particle and pair operators described by an ensemble spec.
fn hamiltonian(spec: &EnsembleSpec) -> Result<(CMatrix, CMatrix), CliError> {
    let l = spec.d + 1;
    Ok(match spec.kind {
        EnsembleKind::Meanfield => (spec.t_matrix()?, spec.v_matrix()?),
        EnsembleKind::Noninteracting => (ensembles::diagonal_operator(spec.epsilons()?), CMatrix::zeros(l * l, l * l)),
        EnsembleKind::Uniform => (CMatrix::zeros(l, l), CMatrix::zeros(l * l, l * l)),
    })
}

fn sweep_options<'a>(cfg: &RunConfig, cancel: &'a AtomicBool) -> SweepOptions<'a> {
    SweepOptions {
        mc_samples: cfg.mc.samples,
        seed: cfg.mc.seed,
        quadrature: QuadratureOptions::default(),
        timings: cfg.output.timings,
        cancel: Some(cancel),
    }
}

pub fn execute(cfg: &RunConfig, cancel: &AtomicBool) -> Result<Outcome, CliError> {
    cfg.ensemble.validate()?;
    let command = cfg.command.ok_or_else(|| CliError::validation("no command"))?;
    match command {
        Command::Reduce => reduce(cfg),
        Command::Limit => limit(cfg, cancel),
        Command::Sweep => sweep(cfg, cancel),
        Command::Sample => sample(cfg),
        Command::Verify => {
            let kind = cfg.verify.as_ref().ok_or_else(|| CliError::validation("verify needs a verify section"))?.kind;
            match kind {
                VerifyKind::Claim => verify_claim(cfg),
                VerifyKind::Series => verify_series(cfg),
                VerifyKind::FreeEnergy => verify_free_energy(cfg),
            }
        }
    }
}

fn plain(artifacts: Vec<Artifact>, summary: Value) -> Outcome {
    Outcome { artifacts, passed: None, truncated: false, summary, tolerances: json!({}) }
}

fn reduce(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.ensemble.n;
    if n < cfg.m || n == 0 {
        return Err(CliError::validation(format!("ensemble.n = {n} must be positive and at least m = {}", cfg.m)));
    }
    let reduced = cfg.ensemble.reduced(n, cfg.m)?;
    let value = json!({ "n": n, "m": cfg.m, "density": reduced.to_json() });
    let art = operator_artifact(cfg, "reduce", &value, reduced.matrix());
    Ok(plain(vec![art], json!({ "trace": reduced.trace().re })))
}

fn limit(cfg: &RunConfig, cancel: &AtomicBool) -> Result<Outcome, CliError> {
    let kind = cfg.resolved_limit();
    let reference = convergence::limit_reference(&cfg.ensemble, kind, cfg.m, &sweep_options(cfg, cancel))?;
    let value = json!({
        "limit": kind,
        "m": cfg.m,
        "sigma": reference.sigma,
        "density": reference.density.to_json(),
    });
    let art = operator_artifact(cfg, "limit", &value, reference.density.matrix());
    Ok(plain(vec![art], json!({ "limit": kind, "sigma": reference.sigma })))
}

fn sweep(cfg: &RunConfig, cancel: &AtomicBool) -> Result<Outcome, CliError> {
    if cfg.n_list.is_empty() {
        return Err(CliError::validation("sweep needs a non-empty n_list"));
    }
    let kind = cfg.resolved_limit();
    let result = convergence::sweep_to_limit(&cfg.ensemble, kind, cfg.m, &cfg.n_list, &sweep_options(cfg, cancel))?;
    let art = match cfg.output.format {
        Some(Format::Json) => json_artifact("sweep", &result),
        _ => {
            let mut bytes = Vec::new();
            convergence::write_sweep_csv(&result, &mut bytes).expect("writing to memory");
            Artifact { name: "sweep.csv".into(), bytes }
        }
    };
    let skipped: Vec<Value> = result
        .rows
        .iter()
        .filter_map(|r| r.skipped.as_ref().map(|why| json!({ "n": r.n, "reason": why })))
        .collect();
    let summary = json!({
        "limit": kind,
        "rows": result.rows.len(),
        "strictly_decreasing": result.strictly_decreasing(),
        "final_distance": result.distances().last(),
        "skipped": skipped,
    });
    Ok(Outcome { artifacts: vec![art], passed: None, truncated: result.truncated, summary, tolerances: json!({}) })
}

fn sample(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = &cfg.ensemble;
    let weight = match spec.kind {
        EnsembleKind::Uniform => DeFinettiWeight::Uniform,
        _ => {
            let (t, v) = hamiltonian(spec)?;
            DeFinettiWeight::boltzmann(spec.beta, t, v)?
        }
    };
    let est = definetti::mc_estimate_moment(cfg.m, spec.d, &weight, cfg.mc.samples, cfg.mc.seed)?;
    let value = json!({
        "m": cfg.m,
        "d": spec.d,
        "samples": est.samples,
        "seed": cfg.mc.seed,
        "z": est.z,
        "z_std_err": est.z_std_err,
        "trace_deviation": est.trace_deviation,
        "density": est.density.to_json(),
        "std_err_re": est.std_err_re,
        "std_err_im": est.std_err_im,
    });
    let art = operator_artifact(cfg, "sample", &value, est.density.matrix());
    Ok(plain(vec![art], json!({ "max_std_err": est.max_std_err(), "trace_deviation": est.trace_deviation })))
}

fn verify_claim(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let j = cfg.verify.as_ref().map_or(1, |v| v.j);
    if cfg.n_list.is_empty() {
        return Err(CliError::validation("verify claim needs a non-empty n_list"));
    }
    let (t, v) = hamiltonian(&cfg.ensemble)?;
    let report = convergence::verify_claim(j, cfg.m, &cfg.n_list, &t, &v)?;
    let tol = cfg.tolerance("claim_j0", DEFAULT_CLAIM_J0_TOL);
    // exact agreement (j = 0, or a scalar W) also passes
    let within_tol = report.rows.iter().all(|r| r.max_deviation <= tol);
    let passed = within_tol || (j > 0 && report.strictly_decreasing());
    let art = match cfg.output.format {
        Some(Format::Json) => json_artifact("verify-claim", &json!({ "j": j, "m": cfg.m, "rows": report.rows })),
        _ => {
            let mut text = String::from("n,max_deviation\n");
            for r in &report.rows {
                text.push_str(&format!("{},{}\n", r.n, convergence::format_float(r.max_deviation)));
            }
            Artifact { name: "verify-claim.csv".into(), bytes: text.into_bytes() }
        }
    };
    Ok(Outcome {
        artifacts: vec![art],
        passed: Some(passed),
        truncated: false,
        summary: json!({ "j": j, "passed": passed, "within_claim_j0": within_tol, "strictly_decreasing": report.strictly_decreasing() }),
        tolerances: json!({ "claim_j0": tol }),
    })
}

fn verify_series(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let order = cfg.verify.as_ref().map_or(6, |v| v.order);
    let spec = &cfg.ensemble;
    let (t, v) = hamiltonian(spec)?;
    let r = convergence::verify_series(order, spec.beta, spec.n, cfg.m, &t, &v)?;
    let passed = r.within_bound();
    let value = json!({
        "order": order,
        "beta": spec.beta,
        "n": spec.n,
        "m": cfg.m,
        "deviation": r.deviation,
        "remainder_bound": r.remainder_bound,
        "truncated": r.truncated.to_json(),
        "exact": r.exact.to_json(),
    });
    Ok(Outcome {
        artifacts: vec![json_artifact("verify-series", &value)],
        passed: Some(passed),
        truncated: false,
        summary: json!({ "passed": passed, "deviation": r.deviation, "remainder_bound": r.remainder_bound }),
        tolerances: json!({}),
    })
}

fn verify_free_energy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let perturbations = cfg.verify.as_ref().map_or(20, |v| v.perturbations);
    let spec = &cfg.ensemble;
    let (h, _) = hamiltonian(spec)?;
    let r = convergence::verify_free_energy(
        spec.beta,
        &h,
        perturbations,
        cfg.mc.samples,
        cfg.mc.seed,
        &QuadratureOptions::default(),
    )?;
    let passed = r.all_trials_pass() && r.optimum_matches_partition();
    let value = json!({
        "beta": spec.beta,
        "optimum": { "value": r.optimum.value, "std_err": r.optimum.std_err },
        "log_partition_value": r.log_partition_value,
        "trials": r.trials,
    });
    Ok(Outcome {
        artifacts: vec![json_artifact("verify-free-energy", &value)],
        passed: Some(passed),
        truncated: false,
        summary: json!({
            "passed": passed,
            "trials_pass": r.all_trials_pass(),
            "optimum_matches_partition": r.optimum_matches_partition(),
        }),
        tolerances: json!({ "sigmas": 3.0 }),
    })
}
