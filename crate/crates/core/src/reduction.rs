//! Partial traces `D_{n:m}` over the last `n - m` particles.
//!
//! Three engines:
//!
//! * occupation-diagonal ensembles, via `P_{n:m} = C(n,m)^{-1} Σ_m ∏ C(n_i, m_i) P_m`
//!   (exact rationals in [`ReductionWeights`], floating point in
//!   [`reduce_diagonal_ensemble`]);
//! * general operators on `H^(n)`, via the branching
//!   `Ψ_n = Σ_{m'} √(∏ C(n_i, m'_i) / C(n, m)) Ψ_{m'} ⊗ Ψ_{n-m'}` ([`reduce_sym`]);
//! * the plain full-tensor partial trace ([`reduce_full`]), used as the oracle.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::occupation::{self, OccupationVector, SymBasis};
use crate::operators::{DenseOperator, DensityOperator};
use crate::symspace::SymOperator;
use crate::{CMatrix, Error, Result, C64};

/// Normalization slack accepted for weight vectors.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tolerance for points on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `table[i][k] = C(n,m)^{-1} ∏_l C(n_l, m_l)` for the i-th n-state and k-th m-state.
#[derive(Clone, Debug)]
pub struct ReductionWeights {
    n: usize,
    m: usize,
    d: usize,
    table: Vec<Vec<BigRational>>,
}

fn big_binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

impl ReductionWeights {
    pub fn new(n: usize, m: usize, d: usize) -> Result<Self> {
        if m > n {
            return Err(Error::invalid(format!("cannot reduce {n} particles to {m}")));
        }
        let big = SymBasis::new(n, d)?;
        let small = SymBasis::new(m, d)?;
        let denom = big_binomial(n as u64, m as u64);
        let table = big
            .states()
            .par_iter()
            .map(|ns| {
                small
                    .states()
                    .iter()
                    .map(|ms| {
                        let num = ns
                            .counts()
                            .iter()
                            .zip(ms.counts())
                            .fold(BigInt::one(), |acc, (&a, &b)| acc * big_binomial(a as u64, b as u64));
                        BigRational::new(num, denom.clone())
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, m, d, table })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, n_index: usize, m_index: usize) -> &BigRational {
        &self.table[n_index][m_index]
    }

    pub fn row(&self, n_index: usize) -> &[BigRational] {
        &self.table[n_index]
    }

    pub fn rows(&self) -> usize {
        self.table.len()
    }

    /// `Σ_n w(n) P_{n:m}` in exact arithmetic; returns the diagonal on `H^(m)`.
    pub fn apply(&self, weights: &[BigRational]) -> Result<Vec<BigRational>> {
        if weights.len() != self.table.len() {
            return Err(Error::mismatch(format!(
                "{} weights for {} occupation states",
                weights.len(),
                self.table.len()
            )));
        }
        let cols = self.table.first().map_or(0, Vec::len);
        let mut out = vec![BigRational::zero(); cols];
        for (w, row) in weights.iter().zip(&self.table) {
            if w.is_zero() {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        Ok(out)
    }
}

/// `∏ n_i (n_i - 1) ⋯ (n_i - m_i + 1) / (n (n-1) ⋯ (n - m + 1))`, the
/// occupation-integer form of `f_n(n/n)` (without the multinomial prefactor).
fn falling_ratio(big: &OccupationVector, small: &OccupationVector) -> f64 {
    if !small.fits_in(big) {
        return 0.0;
    }
    let n = big.total() as f64;
    let mut num = 1.0;
    let mut den = 1.0;
    let mut r_total = 0.0;
    for (&ni, &mi) in big.counts().iter().zip(small.counts()) {
        for r in 0..mi {
            num *= ni as f64 - r as f64;
            den *= n - r_total;
            r_total += 1.0;
        }
    }
    num / den
}

/// `f_n(p)`: the indicator-gated ratio of falling products that tends to
/// `∏ p_i^{m_i}` uniformly on the simplex.
pub fn fn_weight(p: &[f64], occ_m: &OccupationVector, n: usize) -> Result<f64> {
    if p.len() != occ_m.counts().len() {
        return Err(Error::mismatch("simplex point and occupation vector lengths differ"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL || p.iter().any(|&x| x < -SIMPLEX_TOL) {
        return Err(Error::invalid(format!("{p:?} is not on the simplex")));
    }
    let m = occ_m.total() as usize;
    if m > n {
        return Err(Error::invalid(format!("f_n needs n >= m, got n={n}, m={m}")));
    }
    let nf = n as f64;
    let mut num = 1.0;
    for (&pi, &mi) in p.iter().zip(occ_m.counts()) {
        if mi > 0 && pi <= (mi as f64 - 1.0) / nf {
            return Ok(0.0);
        }
        for r in 0..mi {
            num *= pi - r as f64 / nf;
        }
    }
    let den: f64 = (0..m).map(|r| 1.0 - r as f64 / nf).product();
    Ok(num / den)
}

/// `P_{n:m}` for a single occupation projector, as a diagonal density on `H^(m)`.
pub fn reduce_projector(occ: &OccupationVector, m: usize) -> Result<SymOperator> {
    let n = occ.total() as usize;
    if m > n {
        return Err(Error::invalid(format!("cannot reduce {n} particles to {m}")));
    }
    let small = SymBasis::new(m, occ.d())?;
    let diag = small
        .states()
        .iter()
        .map(|ms| Ok(occupation::multinomial(m as u32, ms)? as f64 * falling_ratio(occ, ms)))
        .collect::<Result<Vec<_>>>()?;
    SymOperator::from_diagonal(m, occ.d(), &diag)
}

/// Diagonal of `Σ_n w(n) P_{n:m}` for a weight vector over the canonical
/// n-basis.
pub fn reduce_diagonal_weights(weights: &[f64], n: usize, d: usize, m: usize) -> Result<Vec<f64>> {
    if m > n {
        return Err(Error::invalid(format!("cannot reduce {n} particles to {m}")));
    }
    let big = SymBasis::new(n, d)?;
    if weights.len() != big.len() {
        return Err(Error::mismatch(format!("{} weights for {} occupation states", weights.len(), big.len())));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::NotNormalized { sum });
    }
    let small = SymBasis::new(m, d)?;
    let prefactors = small
        .states()
        .iter()
        .map(|ms| occupation::multinomial(m as u32, ms).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    let diag = small
        .states()
        .par_iter()
        .zip(&prefactors)
        .map(|(ms, &pref)| {
            let s: f64 = big
                .states()
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|(ns, &w)| w * falling_ratio(ns, ms))
                .sum();
            pref * s
        })
        .collect();
    Ok(diag)
}

/// `Σ_n w(n) P_{n:m}` as an operator on `H^(m)`.
pub fn reduce_diagonal_ensemble(weights: &[f64], n: usize, d: usize, m: usize) -> Result<SymOperator> {
    let diag = reduce_diagonal_weights(weights, n, d, m)?;
    SymOperator::from_diagonal(m, d, &diag)
}

/// Partial trace over the last `n - m` tensor factors.
pub fn reduce_full(rho: &DensityOperator, m: usize) -> Result<DensityOperator> {
    let out = partial_trace(rho.op(), m)?;
    DensityOperator::with_tolerance(out, rho.tolerance())
}

/// Partial trace of an arbitrary operator over its last `n - m` factors.
pub fn partial_trace(op: &DenseOperator, m: usize) -> Result<DenseOperator> {
    let n = op.factors();
    if m > n {
        return Err(Error::invalid(format!("cannot reduce {n} factors to {m}")));
    }
    let local = op.local_dim();
    let keep = local.pow(m as u32);
    let traced = local.pow((n - m) as u32);
    let a = op.matrix();
    let out = CMatrix::from_fn(keep, keep, |i, j| {
        (0..traced).map(|r| a[(i * traced + r, j * traced + r)]).sum()
    });
    DenseOperator::new(out, local, m)
}

/// Reduction of any operator on `H^(n)` to `H^(m)` in occupation coordinates.
///
/// `out[a, b] = Σ_r c(a+r, a) c(b+r, b) D[a+r, b+r]` over `#r = n - m`, with
/// `c(n, m') = √(∏ C(n_i, m'_i) / C(n, m))`.
pub fn reduce_sym(op: &SymOperator, m: usize) -> Result<SymOperator> {
    let (n, d) = (op.n(), op.d());
    if m > n {
        return Err(Error::invalid(format!("cannot reduce {n} particles to {m}")));
    }
    if m == n {
        return Ok(op.clone());
    }
    let big = SymBasis::new(n, d)?;
    let small = SymBasis::new(m, d)?;
    let rest = SymBasis::new(n - m, d)?;
    let inv_binom = 1.0 / occupation::binomial(n as u64, m as u64).ok_or(Error::Overflow("reduce_sym"))? as f64;
    // branch[a][r] = (index of a + r in the n-basis, coefficient c(a + r, a))
    let branch: Vec<Vec<(usize, f64)>> = small
        .states()
        .iter()
        .map(|a| {
            rest.states()
                .iter()
                .map(|r| {
                    let joint = a.add(r);
                    let idx = big.index_of(&joint).expect("a + r has n particles").0;
                    let prod: f64 = joint
                        .counts()
                        .iter()
                        .zip(a.counts())
                        .map(|(&ni, &ai)| occupation::binomial(ni as u64, ai as u64).unwrap_or(0) as f64)
                        .product();
                    (idx, (prod * inv_binom).sqrt())
                })
                .collect()
        })
        .collect();
    let dm = small.len();
    let mat = op.matrix();
    let entries: Vec<C64> = (0..dm * dm)
        .into_par_iter()
        .map(|k| {
            let (ia, ib) = (k / dm, k % dm);
            branch[ia]
                .iter()
                .zip(&branch[ib])
                .map(|(&(ra, ca), &(rb, cb))| mat[(ra, rb)] * (ca * cb))
                .sum()
        })
        .collect();
    SymOperator::new(m, d, CMatrix::from_row_slice(dm, dm, &entries))
}
