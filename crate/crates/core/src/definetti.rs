//! Limit states and their de Finetti representations.
//!
//! Each limit density on `H^(m)` is a mixture of `P_v^{⊗m}` where
//! `v(p, θ) = Σ_j e^{iθ_j} √p_j e_j` and `(p, θ)` ranges over `Δ_d × [0, 2π)^{d+1}`.
//! After the phase average only occupation-diagonal terms survive, so each
//! limit is `Σ_m C(m, m) ∫ ∏ p_i^{m_i} ω(dp) P_m` for a measure `ω` on the
//! simplex:
//!
//! * uniform `ω = λ_d`: closed-form Dirichlet moments ([`limit_uniform`]);
//! * `ω ∝ e^{-β Σ ε_i p_i} λ_d`: simplex quadrature ([`limit_noninteracting`]);
//! * `ω = δ_{(1,0,…,0)}`: the condensate ([`limit_condensate`]).
//!
//! For the mean-field limit the weight depends on the phases, and the
//! mixture is estimated by Monte Carlo ([`mc_estimate_moment`]).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::occupation::{self, OccupationVector, SymBasis};
use crate::operators;
use crate::reduction::SIMPLEX_TOL;
use crate::simplex::{self, QuadratureOptions};
use crate::symspace::{self, SymOperator};
use crate::{CMatrix, CVector, Error, Result, C64};

/// A point `(p, θ)` of `Δ_d × [0, 2π)^{d+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPhasePoint {
    p: Vec<f64>,
    theta: Vec<f64>,
}

impl SimplexPhasePoint {
    pub fn new(p: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() != theta.len() {
            return Err(Error::mismatch("p and theta need the same positive length"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid(format!("{p:?} is not on the simplex")));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("phases must be finite"));
        }
        Ok(Self { p, theta })
    }

    /// Skips validation; for points produced by the samplers.
    fn from_parts(p: Vec<f64>, theta: Vec<f64>) -> Self {
        Self { p, theta }
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn d(&self) -> usize {
        self.p.len() - 1
    }
}

/// `v(p, θ) = Σ_j e^{iθ_j} √p_j e_j`.
pub fn v_map(point: &SimplexPhasePoint) -> CVector {
    CVector::from_iterator(
        point.p.len(),
        point.p.iter().zip(&point.theta).map(|(&p, &t)| C64::from_polar(p.sqrt(), t)),
    )
}

/// `P_v = |v⟩⟨v|`.
pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

fn big_factorial(k: u64) -> BigInt {
    (1..=k).fold(BigInt::from(1), |acc, i| acc * BigInt::from(i))
}

/// `∫ ∏ p_i^{m_i} λ_d(dp) = d! ∏ m_i! / (m + d)!`.
pub fn dirichlet_moment(occ: &OccupationVector) -> BigRational {
    let d = occ.d() as u64;
    let m = occ.total() as u64;
    let num = occ
        .counts()
        .iter()
        .fold(big_factorial(d), |acc, &k| acc * big_factorial(k as u64));
    BigRational::new(num, big_factorial(m + d))
}

/// Diagonal of `S_m` in exact arithmetic.
pub fn limit_uniform_exact(m: usize, d: usize) -> Result<Vec<BigRational>> {
    let basis = SymBasis::new(m, d)?;
    basis
        .states()
        .iter()
        .map(|s| {
            let c = occupation::multinomial(m as u32, s)?;
            Ok(dirichlet_moment(s) * BigRational::from_integer(BigInt::from(c)))
        })
        .collect()
}

/// `S_m = Σ_m C(m, m) ∫ ∏ p_i^{m_i} λ_d(dp) P_m`.
pub fn limit_uniform(m: usize, d: usize) -> Result<SymOperator> {
    let diag: Vec<f64> = limit_uniform_exact(m, d)?
        .iter()
        .map(|r| r.to_f64().expect("moments lie in [0, 1]"))
        .collect();
    SymOperator::from_diagonal(m, d, &diag)
}

/// A limit density together with the numerical quality of its coefficients.
#[derive(Clone, Debug)]
pub struct IntegratedLimit {
    pub density: SymOperator,
    /// Standard errors of the diagonal (zero for deterministic quadrature).
    pub std_errors: Vec<f64>,
    pub relative_change: f64,
    pub degree: usize,
}

/// Limit of the noninteracting ensemble at scaled temperature:
/// coefficients `C(m, m) ∫ ∏ p_i^{m_i} e^{-β Σ ε_i p_i} λ_d(dp) / Z_β`.
pub fn limit_noninteracting(
    m: usize,
    d: usize,
    beta: f64,
    epsilons: &[f64],
    opts: &QuadratureOptions,
) -> Result<IntegratedLimit> {
    if epsilons.len() != d + 1 {
        return Err(Error::mismatch(format!("{} epsilons for d = {d}", epsilons.len())));
    }
    let basis = SymBasis::new(m, d)?;
    let shift = if beta >= 0.0 {
        epsilons.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        epsilons.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let states: Vec<Vec<i32>> = basis.states().iter().map(|s| s.counts().iter().map(|&c| c as i32).collect()).collect();
    let outputs = states.len() + 1;
    let res = simplex::integrate(d, outputs, opts, |p, out| {
        let e: f64 = p.iter().zip(epsilons).map(|(pi, ei)| pi * (ei - shift)).sum();
        let boltz = (-beta * e).exp();
        out[0] = boltz;
        for (o, s) in out[1..].iter_mut().zip(&states) {
            *o = boltz * p.iter().zip(s).map(|(pi, &k)| pi.powi(k)).product::<f64>();
        }
    })?;
    let z = res.values[0];
    let mut diag = Vec::with_capacity(states.len());
    let mut errs = Vec::with_capacity(states.len());
    for (k, s) in basis.states().iter().enumerate() {
        let c = occupation::multinomial(m as u32, s)? as f64;
        diag.push(c * res.values[k + 1] / z);
        // first-order error of the ratio, ignoring the correlation with Z
        errs.push(c * res.std_errors[k + 1] / z);
    }
    Ok(IntegratedLimit {
        density: SymOperator::from_diagonal(m, d, &diag)?,
        std_errors: errs,
        relative_change: res.relative_change,
        degree: res.degree,
    })
}

/// `P_{(m, 0, …, 0)} = P_{e_0}^{⊗m}`, the fixed-temperature limit when `ε_0`
/// is strictly smallest.
pub fn limit_condensate(m: usize, d: usize) -> Result<SymOperator> {
    let dim = occupation::sym_dim(m, d)? as usize;
    let mut diag = vec![0.0; dim];
    diag[0] = 1.0;
    SymOperator::from_diagonal(m, d, &diag)
}

/// Weight of `P_v^{⊗∞}` in a de Finetti mixture.
#[derive(Clone, Debug, PartialEq)]
pub enum DeFinettiWeight {
    Uniform,
    /// `e^{-β (Tr(T P_v) + Tr(V P_v ⊗ P_v)/2)}`, normalized by `Z_β`.
    Boltzmann { beta: f64, t: CMatrix, v: CMatrix },
}

impl DeFinettiWeight {
    pub fn boltzmann(beta: f64, t: CMatrix, v: CMatrix) -> Result<Self> {
        let d = t.nrows().checked_sub(1).ok_or_else(|| Error::invalid("empty T"))?;
        symspace::check_two_body(&v, d)?;
        if operators::hermiticity_defect(&t) > operators::HERMITIAN_TOL * operators::max_abs(&t).max(1.0) {
            return Err(Error::NotHermitian { deviation: operators::hermiticity_defect(&t) });
        }
        Ok(Self::Boltzmann { beta, t, v })
    }

    /// Mean-field energy `⟨v, T v⟩ + ⟨v⊗v, V v⊗v⟩ / 2`.
    pub fn energy(t: &CMatrix, v_op: &CMatrix, v: &CVector) -> f64 {
        let one = v.dotc(&(t * v)).re;
        let vv = v.kronecker(v);
        let two = vv.dotc(&(v_op * &vv)).re;
        one + 0.5 * two
    }

    /// Bound on the energy used to keep every importance weight in `(0, 1]`.
    fn reference_energy(&self) -> f64 {
        match self {
            DeFinettiWeight::Uniform => 0.0,
            DeFinettiWeight::Boltzmann { beta, t, v } => {
                let et = operators::hermitian_eigenvalues(t);
                let ev = operators::hermitian_eigenvalues(v);
                if *beta >= 0.0 {
                    et[0] + 0.5 * ev[0]
                } else {
                    et[et.len() - 1] + 0.5 * ev[ev.len() - 1]
                }
            }
        }
    }

    fn log_weight(&self, v: &CVector, reference: f64) -> f64 {
        match self {
            DeFinettiWeight::Uniform => 0.0,
            DeFinettiWeight::Boltzmann { beta, t, v: v_op } => -beta * (Self::energy(t, v_op, v) - reference),
        }
    }
}

/// Streaming weighted moments of a complex vector observable `x` with weight
/// `w`, tracking what the self-normalized estimate `E[w x] / E[w]` and its
/// delta-method error need. Merges with Chan's update.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean_w: f64,
    m2_w: f64,
    /// Mean of `y = w x`.
    mean: Vec<C64>,
    m2_re: Vec<f64>,
    m2_im: Vec<f64>,
    /// Co-moments of `w` with `Re y` and `Im y`.
    cw_re: Vec<f64>,
    cw_im: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean_w: 0.0,
            m2_w: 0.0,
            mean: vec![C64::new(0.0, 0.0); len],
            m2_re: vec![0.0; len],
            m2_im: vec![0.0; len],
            cw_re: vec![0.0; len],
            cw_im: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, w: f64, x: &[C64]) {
        assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let k = self.count as f64;
        let dw = w - self.mean_w;
        self.mean_w += dw / k;
        let dw_new = w - self.mean_w;
        self.m2_w += dw * dw_new;
        for (i, xi) in x.iter().enumerate() {
            let y = xi * w;
            let dy = y - self.mean[i];
            self.mean[i] += dy / k;
            let dy_new = y - self.mean[i];
            self.m2_re[i] += dy.re * dy_new.re;
            self.m2_im[i] += dy.im * dy_new.im;
            self.cw_re[i] += dw * dy_new.re;
            self.cw_im[i] += dw * dy_new.im;
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.len(), other.len());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let f = na * nb / n;
        let dw = other.mean_w - self.mean_w;
        self.mean_w += dw * nb / n;
        self.m2_w += other.m2_w + dw * dw * f;
        for i in 0..self.mean.len() {
            let dy = other.mean[i] - self.mean[i];
            self.mean[i] += dy * (nb / n);
            self.m2_re[i] += other.m2_re[i] + dy.re * dy.re * f;
            self.m2_im[i] += other.m2_im[i] + dy.im * dy.im * f;
            self.cw_re[i] += other.cw_re[i] + dw * dy.re * f;
            self.cw_im[i] += other.cw_im[i] + dw * dy.im * f;
        }
        self.count += other.count;
    }

    pub fn mean_weight(&self) -> f64 {
        self.mean_w
    }

    /// Standard error of the mean weight.
    pub fn weight_std_err(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        (self.m2_w / (n - 1.0) / n).sqrt()
    }

    /// `E[w x] / E[w]`.
    pub fn ratio_mean(&self) -> Vec<C64> {
        self.mean.iter().map(|y| y / self.mean_w).collect()
    }

    /// Delta-method standard errors of the real and imaginary parts of
    /// [`MomentAccumulator::ratio_mean`].
    pub fn ratio_std_err(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count as f64;
        if self.count < 2 {
            let nan = vec![f64::NAN; self.len()];
            return (nan.clone(), nan);
        }
        let var_w = self.m2_w / (n - 1.0);
        let scale = 1.0 / (n * self.mean_w * self.mean_w);
        let mut re = Vec::with_capacity(self.len());
        let mut im = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mu = self.mean[i] / self.mean_w;
            let vr = self.m2_re[i] / (n - 1.0) - 2.0 * mu.re * self.cw_re[i] / (n - 1.0) + mu.re * mu.re * var_w;
            let vi = self.m2_im[i] / (n - 1.0) - 2.0 * mu.im * self.cw_im[i] / (n - 1.0) + mu.im * mu.im * var_w;
            re.push((vr.max(0.0) * scale).sqrt());
            im.push((vi.max(0.0) * scale).sqrt());
        }
        (re, im)
    }
}

/// Symmetric-basis coordinates of `v^{⊗m}`: `√C(m, a) ∏ v_i^{a_i}`.
pub fn sym_power_coordinates(v: &CVector, basis: &SymBasis) -> Result<CVector> {
    let m = basis.n() as u32;
    let coords = basis
        .states()
        .iter()
        .map(|s| {
            let c = (occupation::multinomial(m, s)? as f64).sqrt();
            let prod = s.counts().iter().zip(v.iter()).fold(C64::new(1.0, 0.0), |acc, (&k, vi)| acc * vi.powu(k));
            Ok(prod * c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(coords))
}

/// Monte Carlo estimate of a de Finetti mixture on `H^(m)`.
#[derive(Clone, Debug)]
pub struct McEstimate {
    /// Trace-renormalized estimate.
    pub density: SymOperator,
    /// Row-major standard errors of the real parts.
    pub std_err_re: Vec<f64>,
    /// Row-major standard errors of the imaginary parts.
    pub std_err_im: Vec<f64>,
    /// Estimate of `Z_β` (1 for the uniform weight).
    pub z: f64,
    pub z_std_err: f64,
    /// `|Tr - 1|` before renormalization.
    pub trace_deviation: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn max_std_err(&self) -> f64 {
        self.std_err_re.iter().chain(&self.std_err_im).copied().fold(0.0, f64::max)
    }

    /// Largest `|estimate - target| / σ` over entries with nonzero σ, plus
    /// the largest absolute deviation among entries with zero σ.
    pub fn max_sigma_deviation(&self, target: &CMatrix) -> (f64, f64) {
        let dim = self.density.dim();
        let mut worst_sigma: f64 = 0.0;
        let mut worst_exact: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let k = i * dim + j;
                let diff = self.density.matrix()[(i, j)] - target[(i, j)];
                for (delta, sigma) in [(diff.re, self.std_err_re[k]), (diff.im, self.std_err_im[k])] {
                    if sigma > 0.0 {
                        worst_sigma = worst_sigma.max(delta.abs() / sigma);
                    } else {
                        worst_exact = worst_exact.max(delta.abs());
                    }
                }
            }
        }
        (worst_sigma, worst_exact)
    }
}

/// Samples `p ~ Dirichlet(1, …, 1)`, `θ ~ U[0, 2π)^{d+1}` and averages
/// `P_v^{⊗m}` in occupation coordinates, self-normalizing the weights.
pub fn mc_estimate_moment(
    m: usize,
    d: usize,
    weight: &DeFinettiWeight,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::invalid("at least two samples are needed for error bars"));
    }
    if let DeFinettiWeight::Boltzmann { t, .. } = weight {
        if t.nrows() != d + 1 {
            return Err(Error::mismatch(format!("T is {}x{}, d = {d}", t.nrows(), t.ncols())));
        }
    }
    let basis = SymBasis::new(m, d)?;
    let dim = basis.len();
    let reference = weight.reference_energy();
    let parts: Vec<Result<MomentAccumulator>> = simplex::blocks(samples)
        .par_iter()
        .map(|&(stream, count)| {
            let mut rng = simplex::stream_rng(seed, stream);
            let mut acc = MomentAccumulator::new(dim * dim);
            let mut p = vec![0.0; d + 1];
            let mut theta = vec![0.0; d + 1];
            let mut x = vec![C64::new(0.0, 0.0); dim * dim];
            for _ in 0..count {
                simplex::sample_simplex(&mut rng, &mut p);
                simplex::sample_phases(&mut rng, &mut theta);
                let v = v_map(&SimplexPhasePoint::from_parts(p.clone(), theta.clone()));
                let lw = weight.log_weight(&v, reference);
                let w = lw.exp();
                if !w.is_finite() {
                    return Err(Error::Numerical(format!("importance weight overflow (log weight {lw})")));
                }
                let c = sym_power_coordinates(&v, &basis)?;
                for i in 0..dim {
                    for j in 0..dim {
                        x[i * dim + j] = c[i] * c[j].conj();
                    }
                }
                acc.push(w, &x);
            }
            Ok(acc)
        })
        .collect();
    let mut total = MomentAccumulator::new(dim * dim);
    for part in parts {
        total.merge(&part?);
    }
    if total.mean_weight() <= 0.0 {
        return Err(Error::Numerical("all importance weights underflowed".into()));
    }
    let mean = total.ratio_mean();
    let (std_err_re, std_err_im) = total.ratio_std_err();
    let raw = CMatrix::from_row_slice(dim, dim, &mean);
    let tr = raw.trace();
    let trace_deviation = (tr - C64::new(1.0, 0.0)).norm();
    // Hermitize; the estimator is Hermitian up to rounding.
    let herm = (&raw + raw.adjoint()) * C64::new(0.5 / tr.re, 0.0);
    let scale = (-match weight {
        DeFinettiWeight::Uniform => 0.0,
        DeFinettiWeight::Boltzmann { beta, .. } => beta * reference,
    })
    .exp();
    Ok(McEstimate {
        density: SymOperator::new(m, d, herm)?,
        std_err_re,
        std_err_im,
        z: total.mean_weight() * scale,
        z_std_err: total.weight_std_err() * scale,
        trace_deviation,
        samples,
    })
}

/// `∫ Π_r e^{i(θ_{j_r} - θ_{k_r})} σ(dθ)`: 1 when the index tuples have the
/// same occupation profile, 0 otherwise.
pub fn phase_integral(j: &[usize], k: &[usize], d: usize) -> Result<f64> {
    if j.len() != k.len() {
        return Err(Error::mismatch("index tuples of different length"));
    }
    let same = occupation::occupation_profile(j, d)? == occupation::occupation_profile(k, d)?;
    Ok(if same { 1.0 } else { 0.0 })
}

/// Outcome of the exact phase average at a fixed simplex point.
#[derive(Clone, Debug)]
pub struct PhaseAverage {
    /// `∫ P_v^{⊗m} σ(dθ)` in full-tensor coordinates.
    pub operator: CMatrix,
    /// `Σ_m C(m, m) ∏ p_i^{m_i} P_m` in full-tensor coordinates.
    pub expected: CMatrix,
    pub max_deviation: f64,
    /// No entry couples different occupation sectors.
    pub block_diagonal: bool,
}

/// Largest `m` accepted by [`phase_average_exact`].
pub const PHASE_AVERAGE_MAX_M: usize = 4;
/// Largest `d` accepted by [`phase_average_exact`].
pub const PHASE_AVERAGE_MAX_D: usize = 2;

/// Expands `P_v^{⊗m}` over index tuples `(j⃗, k⃗)`, keeps the terms whose
/// phase integral is 1 and compares with the occupation-diagonal formula.
pub fn phase_average_exact(m: usize, p: &[f64]) -> Result<PhaseAverage> {
    let d = p.len().checked_sub(1).ok_or_else(|| Error::invalid("empty simplex point"))?;
    if m > PHASE_AVERAGE_MAX_M || d > PHASE_AVERAGE_MAX_D {
        return Err(Error::Capacity {
            what: "phase average index tuples (d+1)^(2m)",
            required: occupation::tensor_dim(2 * m, d)?,
            limit: occupation::tensor_dim(2 * PHASE_AVERAGE_MAX_M, PHASE_AVERAGE_MAX_D)?,
        });
    }
    SimplexPhasePoint::new(p.to_vec(), vec![0.0; d + 1])?;
    let local = d + 1;
    let dim = local.pow(m as u32);
    let mut tuples = Vec::with_capacity(dim);
    let mut profiles = Vec::with_capacity(dim);
    for idx in 0..dim {
        let mut t = vec![0usize; m];
        operators::digits(idx, local, m, &mut t);
        profiles.push(occupation::occupation_profile(&t, d)?);
        tuples.push(t);
    }
    let sqrt_p: Vec<f64> = p.iter().map(|x| x.sqrt()).collect();
    let mut op = CMatrix::zeros(dim, dim);
    for (a, ja) in tuples.iter().enumerate() {
        for (b, kb) in tuples.iter().enumerate() {
            let phase = phase_integral(ja, kb, d)?;
            if phase == 0.0 {
                continue;
            }
            let amp: f64 = ja.iter().zip(kb).map(|(&j, &k)| sqrt_p[j] * sqrt_p[k]).product();
            op[(a, b)] = C64::new(phase * amp, 0.0);
        }
    }
    let basis = SymBasis::new(m, d)?;
    let diag = basis
        .states()
        .iter()
        .map(|s| {
            let c = occupation::multinomial(m as u32, s)? as f64;
            Ok(c * s.counts().iter().zip(p).map(|(&k, &pi)| pi.powi(k as i32)).product::<f64>())
        })
        .collect::<Result<Vec<_>>>()?;
    let expected = symspace::EmbeddingIsometry::new(m, d)?.expand(&SymOperator::from_diagonal(m, d, &diag)?)?;
    let block_diagonal = (0..dim).all(|a| (0..dim).all(|b| profiles[a] == profiles[b] || op[(a, b)].norm() == 0.0));
    Ok(PhaseAverage {
        max_deviation: operators::max_entry_diff(&op, &expected),
        operator: op,
        expected,
        block_diagonal,
    })
}

/// Monte Carlo estimate of the free-energy functional
/// `F[f] = ∫⟨v, H v⟩ f + (1/β) ∫ f ln f` over `λ_d × σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub std_err: f64,
    pub energy: f64,
    pub entropy: f64,
    /// Sample mean of `f` before it was renormalized to 1.
    pub normalization: f64,
}

/// Estimates `F[f]` from `samples` draws. The density is renormalized on the
/// sample itself, so `F` is evaluated for `f / mean(f)`; the raw mean is
/// reported as [`FreeEnergyEstimate::normalization`]. With common random
/// numbers, `F[f*] ≤ F[f]` then holds sample by sample for the Boltzmann
/// density `f* ∝ e^{-β⟨v, H v⟩}`.
pub fn free_energy<F>(density: F, beta: f64, h: &CMatrix, samples: usize, seed: u64) -> Result<FreeEnergyEstimate>
where
    F: Fn(&SimplexPhasePoint) -> f64 + Sync,
{
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::invalid("free energy needs a finite nonzero beta"));
    }
    if samples < 2 {
        return Err(Error::invalid("at least two samples are needed for error bars"));
    }
    let d = h.nrows().checked_sub(1).ok_or_else(|| Error::invalid("empty H"))?;
    let chunks: Vec<Result<Vec<[f64; 3]>>> = simplex::blocks(samples)
        .par_iter()
        .map(|&(stream, count)| {
            let mut rng = simplex::stream_rng(seed, stream);
            let mut p = vec![0.0; d + 1];
            let mut theta = vec![0.0; d + 1];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                simplex::sample_simplex(&mut rng, &mut p);
                simplex::sample_phases(&mut rng, &mut theta);
                let point = SimplexPhasePoint::from_parts(p.clone(), theta.clone());
                let f = density(&point);
                if f <= 0.0 || !f.is_finite() {
                    return Err(Error::invalid(format!("density value {f} is not positive")));
                }
                let v = v_map(&point);
                let e = v.dotc(&(h * &v)).re;
                out.push([f, e * f, f * f.ln()]);
            }
            Ok(out)
        })
        .collect();
    let mut rows = Vec::with_capacity(samples);
    for c in chunks {
        rows.extend(c?);
    }
    let n = rows.len() as f64;
    let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / n;
    let (mf, ma, mb) = (mean(0), mean(1), mean(2));
    let energy = ma / mf;
    let entropy = mb / mf - mf.ln();
    let value = energy + entropy / beta;
    // delta method for F(mean f, mean Ef, mean f ln f)
    let gf = -ma / (mf * mf) - mb / (beta * mf * mf) - 1.0 / (beta * mf);
    let ga = 1.0 / mf;
    let gb = 1.0 / (beta * mf);
    let var = rows
        .iter()
        .map(|r| {
            let psi = gf * (r[0] - mf) + ga * (r[1] - ma) + gb * (r[2] - mb);
            psi * psi
        })
        .sum::<f64>()
        / (n - 1.0);
    Ok(FreeEnergyEstimate { value, std_err: (var / n).sqrt(), energy, entropy, normalization: mf })
}

/// `Z_β = ∫∫ e^{-β⟨v, H v⟩} σ(dθ) λ_d(dp)` for a single-particle `H`.
///
/// The measure induced on unit vectors is unitarily invariant, so `Z_β`
/// depends only on the spectrum of `H` and reduces to a simplex integral.
pub fn one_body_partition(beta: f64, h: &CMatrix, opts: &QuadratureOptions) -> Result<f64> {
    let eig = operators::hermitian_eigenvalues(h);
    let d = eig.len() - 1;
    let res = simplex::integrate(d, 1, opts, |p, out| {
        out[0] = (-beta * p.iter().zip(&eig).map(|(a, b)| a * b).sum::<f64>()).exp();
    })?;
    Ok(res.values[0])
}

/// `Tr S_m` in exact arithmetic.
pub fn limit_uniform_trace(m: usize, d: usize) -> Result<BigRational> {
    Ok(limit_uniform_exact(m, d)?.into_iter().fold(BigRational::zero(), |a, b| a + b))
}
