//! Numerical checks of the finite-n to limit convergence statements.
//!
//! * [`sweep_to_limit`]: trace distance between `Γ_{n:m}` and a limit state
//!   along a list of particle numbers.
//! * [`verify_claim`]: the large-n moment identity
//!   `n^{-j} {H_n^j Σ_n}_{:m} / Tr Σ_n → 2^{-j} {W_{m+1,m+2} ⋯ W_{m+2j-1,m+2j} S_{m+2j}}_{:m}`.
//! * [`verify_series`]: truncation of the reduced `e^{-β H_n / n}` series
//!   against its majorant.
//! * [`verify_free_energy`]: the variational property of the Boltzmann
//!   density for the free-energy functional.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::definetti::{self, DeFinettiWeight, SimplexPhasePoint};
use crate::ensembles::{EnsembleKind, EnsembleSpec};
use crate::operators::{self, DenseOperator};
use crate::reduction;
use crate::simplex::QuadratureOptions;
use crate::symspace::{self, EmbeddingIsometry, SymOperator};
use crate::{CMatrix, Error, Result, C64};

/// Limit object a sweep is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitKind {
    /// `S_m`.
    Uniform,
    /// Scaled-temperature noninteracting limit built from the ensemble's `β`.
    Noninteracting,
    /// `P_{e_0}^{⊗m}`.
    Condensate,
    /// Monte Carlo estimate of `G_m` built from the ensemble's `β`, `T`, `V`.
    Meanfield,
}

impl LimitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LimitKind::Uniform => "uniform",
            LimitKind::Noninteracting => "noninteracting",
            LimitKind::Condensate => "condensate",
            LimitKind::Meanfield => "meanfield",
        }
    }
}

/// Knobs shared by the sweep and limit computations.
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions<'a> {
    pub mc_samples: usize,
    pub seed: u64,
    pub quadrature: QuadratureOptions,
    /// Record wall-clock time per row. Off by default so that artifacts are
    /// byte-reproducible.
    pub timings: bool,
    /// Rows not yet started when this flag is raised are dropped.
    pub cancel: Option<&'a AtomicBool>,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        Self { mc_samples: 1_000_000, seed: 0, quadrature: QuadratureOptions::default(), timings: false, cancel: None }
    }
}

/// A limit state with an uncertainty on the trace-distance scale.
#[derive(Clone, Debug)]
pub struct LimitReference {
    pub kind: LimitKind,
    pub density: SymOperator,
    /// `0` for exact and quadrature limits. For Monte Carlo, the bound
    /// `½ √dim ‖σ‖_F` on the trace-norm noise, with `σ` the entrywise errors.
    pub sigma: f64,
    pub mc: Option<definetti::McEstimate>,
}

fn diagonal_of(t: &CMatrix) -> Result<Vec<f64>> {
    let off = (0..t.nrows()).flat_map(|i| (0..t.ncols()).map(move |j| (i, j))).filter(|(i, j)| i != j);
    if off.map(|(i, j)| t[(i, j)].norm()).fold(0.0, f64::max) > 0.0 {
        return Err(Error::invalid("the noninteracting limit needs a diagonal T"));
    }
    Ok((0..t.nrows()).map(|i| t[(i, i)].re).collect())
}

/// Builds the limit object named by `kind` for the parameters in `spec`.
pub fn limit_reference(spec: &EnsembleSpec, kind: LimitKind, m: usize, opts: &SweepOptions) -> Result<LimitReference> {
    spec.validate()?;
    let d = spec.d;
    let (density, sigma, mc) = match kind {
        LimitKind::Uniform => (definetti::limit_uniform(m, d)?, 0.0, None),
        LimitKind::Condensate => (definetti::limit_condensate(m, d)?, 0.0, None),
        LimitKind::Noninteracting => {
            let eps = match spec.kind {
                EnsembleKind::Meanfield => diagonal_of(&spec.t_matrix()?)?,
                EnsembleKind::Noninteracting => spec.epsilons()?.to_vec(),
                EnsembleKind::Uniform => vec![0.0; d + 1],
            };
            let lim = definetti::limit_noninteracting(m, d, spec.beta, &eps, &opts.quadrature)?;
            let sigma = lim.std_errors.iter().sum::<f64>() * 0.5;
            (lim.density, sigma, None)
        }
        LimitKind::Meanfield => {
            let (t, v) = match spec.kind {
                EnsembleKind::Meanfield => (spec.t_matrix()?, spec.v_matrix()?),
                EnsembleKind::Noninteracting => {
                    let l = d + 1;
                    (crate::ensembles::diagonal_operator(spec.epsilons()?), CMatrix::zeros(l * l, l * l))
                }
                EnsembleKind::Uniform => {
                    let l = d + 1;
                    (CMatrix::zeros(l, l), CMatrix::zeros(l * l, l * l))
                }
            };
            let weight = DeFinettiWeight::boltzmann(spec.beta, t, v)?;
            let est = definetti::mc_estimate_moment(m, d, &weight, opts.mc_samples, opts.seed)?;
            let dim = est.density.dim() as f64;
            let frob = est.std_err_re.iter().chain(&est.std_err_im).map(|s| s * s).sum::<f64>().sqrt();
            (est.density.clone(), 0.5 * dim.sqrt() * frob, Some(est))
        }
    };
    Ok(LimitReference { kind, density, sigma, mc })
}

/// One line of a sweep. `trace_distance` is `None` when the row hit a
/// capacity limit, and `skipped` then carries the reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub scaled: bool,
    pub trace_distance: Option<f64>,
    pub sigma_ref: f64,
    pub wall_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: EnsembleSpec,
    pub limit: LimitKind,
    pub m: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// Some requested rows were dropped by cancellation.
    pub truncated: bool,
}

impl SweepResult {
    /// Trace distances of the rows that were computed.
    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.trace_distance).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.distances().windows(2).all(|w| w[1] < w[0])
    }
}

/// For each `n` in `n_list` (sorted, deduplicated), computes `Γ_{n:m}` and
/// its trace distance to the requested limit. Rows run in parallel and are
/// assembled in ascending `n`.
pub fn sweep_to_limit(
    spec: &EnsembleSpec,
    limit: LimitKind,
    m: usize,
    n_list: &[usize],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if let Some(&n) = ns.iter().find(|&&n| n < m) {
        return Err(Error::invalid(format!("n = {n} is smaller than m = {m}")));
    }
    if spec.kind == EnsembleKind::Meanfield {
        if let Some(&n) = ns.iter().find(|&&n| n < 2) {
            return Err(Error::invalid(format!("mean-field ensembles need n >= 2, got {n}")));
        }
    }
    let reference = limit_reference(spec, limit, m, opts)?;
    let rows: Vec<Option<Result<SweepRow>>> = ns
        .par_iter()
        .map(|&n| {
            if opts.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                return None;
            }
            let start = Instant::now();
            let mut row = SweepRow {
                n,
                m,
                beta: spec.beta,
                scaled: spec.scaled,
                trace_distance: None,
                sigma_ref: reference.sigma,
                wall_time_s: None,
                skipped: None,
            };
            match spec.reduced(n, m) {
                Ok(reduced) => {
                    let dist = operators::trace_distance_matrices(reduced.matrix(), reference.density.matrix());
                    match dist {
                        Ok(x) => row.trace_distance = Some(x.clamp(0.0, 1.0)),
                        Err(e) => return Some(Err(e)),
                    }
                }
                Err(e) if e.is_capacity() => row.skipped = Some(e.to_string()),
                Err(e) => return Some(Err(e)),
            }
            if opts.timings {
                row.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            Some(Ok(row))
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut truncated = false;
    for r in rows {
        match r {
            Some(r) => out.push(r?),
            None => truncated = true,
        }
    }
    Ok(SweepResult { spec: spec.clone(), limit, m, seed: opts.seed, rows: out, truncated })
}

/// Column header of sweep CSV files.
pub const CSV_HEADER: &str = "n,m,beta,scaled,trace_distance,sigma_ref,wall_time_s";

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            r.m,
            format_float(r.beta),
            r.scaled,
            r.trace_distance.map(format_float).unwrap_or_default(),
            format_float(r.sigma_ref),
            r.wall_time_s.map(format_float).unwrap_or_default(),
        )?;
    }
    Ok(())
}

/// Deviation of the moment identity at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimRow {
    pub n: usize,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClaimReport {
    pub j: usize,
    pub m: usize,
    pub rows: Vec<ClaimRow>,
    /// `2^{-j} {W_{m+1,m+2} ⋯ S_{m+2j}}_{:m}` on `m` full tensor factors.
    pub limit: CMatrix,
}

impl ClaimReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_deviation < w[0].max_deviation)
    }
}

/// Largest `j` accepted by [`verify_claim`].
pub const CLAIM_MAX_J: usize = 3;

/// `2^{-j} {W_{m+1,m+2} ⋯ W_{m+2j-1,m+2j} S_{m+2j}}_{:m}` on the full tensor space.
pub fn claim_limit(j: usize, m: usize, t: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let d = t.nrows() - 1;
    let local = d + 1;
    let total = m + 2 * j;
    crate::occupation::Capacity::default().check_dense_side(total, d)?;
    let w = symspace::pair_operator(t, v)?;
    let s = EmbeddingIsometry::new(total, d)?.expand(&definetti::limit_uniform(total, d)?)?;
    let mut prod = s;
    // the W factors act on disjoint pairs and commute
    for k in 0..j {
        let sites = [m + 2 * k, m + 2 * k + 1];
        prod = operators::embed_local(&w, &sites, total, local)? * prod;
    }
    let reduced = reduction::partial_trace(&DenseOperator::new(prod, local, total)?, m)?;
    Ok(reduced.into_matrix() * C64::new(0.5f64.powi(j as i32), 0.0))
}

/// `n^{-j} {H_n^j Σ_n}_{:m} / Tr Σ_n`, computed in occupation coordinates and
/// embedded into `m` full tensor factors.
pub fn claim_finite(j: usize, m: usize, n: usize, t: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let d = t.nrows() - 1;
    if n < 2 || n < m {
        return Err(Error::invalid(format!("need n >= max(2, m), got n = {n}, m = {m}")));
    }
    let h = symspace::lift_two_body_meanfield(t, v, n)?;
    let dim = h.dim();
    let scaled = h.matrix() * C64::new(1.0 / n as f64, 0.0);
    let mut power = CMatrix::identity(dim, dim);
    for _ in 0..j {
        power = &scaled * power;
    }
    power /= C64::new(dim as f64, 0.0);
    let reduced = reduction::reduce_sym(&SymOperator::new(n, d, power)?, m)?;
    EmbeddingIsometry::new(m, d)?.expand(&reduced)
}

/// Max-entry deviation between the finite-n moment and its limit for every
/// `n` in `n_list`.
pub fn verify_claim(j: usize, m: usize, n_list: &[usize], t: &CMatrix, v: &CMatrix) -> Result<ClaimReport> {
    if j > CLAIM_MAX_J {
        return Err(Error::invalid(format!("j = {j} exceeds {CLAIM_MAX_J}")));
    }
    let d = t.nrows().checked_sub(1).ok_or_else(|| Error::invalid("empty T"))?;
    symspace::check_two_body(v, d)?;
    let limit = claim_limit(j, m, t, v)?;
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let finite = claim_finite(j, m, n, t, v)?;
            Ok(ClaimRow { n, max_deviation: operators::max_entry_diff(&finite, &limit) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClaimReport { j, m, rows, limit })
}

/// Truncated series against the exact reduced exponential.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesReport {
    pub order: usize,
    /// `Σ_{j ≤ J} (1/j!) (-β/n)^j {H_n^j Σ_n}_{:m} / Tr Σ_n`.
    pub truncated: SymOperator,
    /// `{e^{-β H_n / n} Σ_n}_{:m} / Tr Σ_n`.
    pub exact: SymOperator,
    /// `Σ_{j > J} |β|^j ‖W‖^j / j!`.
    pub remainder_bound: f64,
    /// Trace norm of `truncated - exact`.
    pub deviation: f64,
}

impl SeriesReport {
    pub fn within_bound(&self) -> bool {
        self.deviation <= self.remainder_bound
    }
}

/// `Σ_{j > order} x^j / j!` for `x ≥ 0`, summed term by term.
pub fn exp_tail(x: f64, order: usize) -> f64 {
    let mut term: f64 = (1..=order + 1).map(|k| x / k as f64).product();
    let mut sum = 0.0;
    let mut k = order + 1;
    while term > 0.0 && term > sum * f64::EPSILON {
        sum += term;
        k += 1;
        term *= x / k as f64;
    }
    sum
}

/// Compares the order-`J` partial sum of the reduced exponential series with
/// the exact reduction of `e^{-β H_n / n} Σ_n / Tr Σ_n`.
///
/// The bound holds because `‖H_n / n‖ ≤ ‖W‖ / 2` on `H^(n)` and reduction
/// does not increase the trace norm.
pub fn verify_series(order: usize, beta: f64, n: usize, m: usize, t: &CMatrix, v: &CMatrix) -> Result<SeriesReport> {
    let d = t.nrows().checked_sub(1).ok_or_else(|| Error::invalid("empty T"))?;
    if n < 2 || n < m {
        return Err(Error::invalid(format!("need n >= max(2, m), got n = {n}, m = {m}")));
    }
    let h = symspace::lift_two_body_meanfield(t, v, n)?;
    let dim = h.dim();
    let x = h.matrix() * C64::new(-beta / n as f64, 0.0);
    let mut term = CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0);
    let mut partial = term.clone();
    for k in 1..=order {
        term = &x * term / C64::new(k as f64, 0.0);
        partial += &term;
    }
    let exact = operators::hermitian_function(h.matrix(), |e| (-beta * e / n as f64).exp())? / C64::new(dim as f64, 0.0);
    let truncated = reduction::reduce_sym(&SymOperator::new(n, d, partial)?, m)?;
    let exact = reduction::reduce_sym(&SymOperator::new(n, d, exact)?, m)?;
    let diff = truncated.matrix() - exact.matrix();
    let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    let deviation = operators::trace_norm_hermitian(&herm);
    let w_norm = operators::spectral_norm_hermitian(&symspace::pair_operator(t, v)?);
    Ok(SeriesReport {
        order,
        truncated,
        exact,
        remainder_bound: exp_tail(beta.abs() * w_norm, order),
        deviation,
    })
}

/// One perturbed density in the variational check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTrial {
    pub value: f64,
    pub std_err: f64,
    /// `F[f*] ≤ F[f] + 3 √(σ*² + σ²)`.
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeEnergyReport {
    pub optimum: definetti::FreeEnergyEstimate,
    /// `-(1/β) ln Z_β` by quadrature.
    pub log_partition_value: f64,
    pub trials: Vec<PerturbationTrial>,
}

impl FreeEnergyReport {
    pub fn optimum_matches_partition(&self) -> bool {
        (self.optimum.value - self.log_partition_value).abs() <= 3.0 * self.optimum.std_err
    }

    pub fn all_trials_pass(&self) -> bool {
        self.trials.iter().all(|t| t.passes)
    }
}

/// Random smooth positive factor on `Δ_d × torus`.
#[derive(Clone, Debug)]
struct Perturbation {
    linear: Vec<f64>,
    phase: Vec<f64>,
}

impl Perturbation {
    fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let linear = (0..=d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let phase = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Self { linear, phase }
    }

    fn factor(&self, pt: &SimplexPhasePoint) -> f64 {
        let p = pt.p();
        let th = pt.theta();
        let lin: f64 = self.linear.iter().zip(p).map(|(c, x)| c * x).sum();
        let ph: f64 = self
            .phase
            .iter()
            .enumerate()
            .map(|(k, c)| c * (p[k] * p[k + 1]).sqrt() * (th[k + 1] - th[k]).cos())
            .sum();
        (lin + ph).exp()
    }
}

/// Evaluates `F` at the Boltzmann density `f* ∝ e^{-β⟨v, H v⟩}` and at
/// `trials` random multiplicative perturbations of it, all on the same
/// sample stream.
pub fn verify_free_energy(
    beta: f64,
    h: &CMatrix,
    trials: usize,
    samples: usize,
    seed: u64,
    quadrature: &QuadratureOptions,
) -> Result<FreeEnergyReport> {
    let d = h.nrows().checked_sub(1).ok_or_else(|| Error::invalid("empty H"))?;
    let z = definetti::one_body_partition(beta, h, quadrature)?;
    let energy = |pt: &SimplexPhasePoint| {
        let v = definetti::v_map(pt);
        v.dotc(&(h * &v)).re
    };
    let fstar = |pt: &SimplexPhasePoint| (-beta * energy(pt)).exp() / z;
    let optimum = definetti::free_energy(fstar, beta, h, samples, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7065_7274);
    let perturbations: Vec<Perturbation> = (0..trials).map(|_| Perturbation::random(d, &mut rng)).collect();
    let trials = perturbations
        .iter()
        .map(|pert| {
            let est = definetti::free_energy(|pt| fstar(pt) * pert.factor(pt), beta, h, samples, seed)?;
            let band = 3.0 * (optimum.std_err.powi(2) + est.std_err.powi(2)).sqrt();
            Ok(PerturbationTrial { value: est.value, std_err: est.std_err, passes: optimum.value <= est.value + band })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FreeEnergyReport { optimum, log_partition_value: -z.ln() / beta, trials })
}
