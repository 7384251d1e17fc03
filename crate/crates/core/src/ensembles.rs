//! Finite-n ensembles on `H^(n)`: uniform, noninteracting Gibbs and
//! mean-field Gibbs.
//!
//! The uniform and noninteracting ensembles are diagonal in the occupation
//! basis and are handled as weight vectors. Their m-particle reductions can
//! also be computed without enumerating `{#n = n}` at all (see
//! [`noninteracting_reduced`]), which is what makes `n ~ 10^4` practical.

use serde::{Deserialize, Serialize};

use crate::occupation::{self, SymBasis};
use crate::operators::{self, OperatorJson};
use crate::reduction;
use crate::symspace::{self, SymOperator};
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Uniform,
    Noninteracting,
    Meanfield,
}

/// Declarative description of an ensemble, as it appears in run configs.
///
/// For `noninteracting`, the standard basis diagonalizes `T` and `epsilons`
/// are its eigenvalues. A general `T` goes through `meanfield` with `V = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    #[serde(default)]
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub beta: f64,
    /// Use `β/n` instead of `β`.
    #[serde(default)]
    pub scaled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<OperatorJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<OperatorJson>,
}

impl EnsembleSpec {
    pub fn uniform(d: usize) -> Self {
        Self { kind: EnsembleKind::Uniform, n: 0, d, beta: 0.0, scaled: false, epsilons: None, t: None, v: None }
    }

    pub fn noninteracting(d: usize, beta: f64, scaled: bool, epsilons: Vec<f64>) -> Self {
        Self {
            kind: EnsembleKind::Noninteracting,
            n: 0,
            d,
            beta,
            scaled,
            epsilons: Some(epsilons),
            t: None,
            v: None,
        }
    }

    pub fn meanfield(beta: f64, scaled: bool, t: &CMatrix, v: &CMatrix) -> Self {
        let d = t.nrows() - 1;
        Self {
            kind: EnsembleKind::Meanfield,
            n: 0,
            d,
            beta,
            scaled,
            epsilons: None,
            t: Some(OperatorJson::from_matrix(t, d + 1, 1)),
            v: Some(OperatorJson::from_matrix(v, d + 1, 2)),
        }
    }

    /// `β/n` when scaled, `β` otherwise.
    pub fn beta_eff(&self, n: usize) -> f64 {
        if self.scaled {
            self.beta / n as f64
        } else {
            self.beta
        }
    }

    pub fn epsilons(&self) -> Result<&[f64]> {
        let eps = self
            .epsilons
            .as_deref()
            .ok_or_else(|| Error::invalid("noninteracting ensemble needs epsilons"))?;
        if eps.len() != self.d + 1 {
            return Err(Error::mismatch(format!("{} epsilons for d = {}", eps.len(), self.d)));
        }
        Ok(eps)
    }

    pub fn t_matrix(&self) -> Result<CMatrix> {
        let t = self.t.as_ref().ok_or_else(|| Error::invalid("mean-field ensemble needs t"))?.to_matrix()?;
        if t.nrows() != self.d + 1 {
            return Err(Error::mismatch(format!("t is {}x{}, d = {}", t.nrows(), t.ncols(), self.d)));
        }
        Ok(t)
    }

    pub fn v_matrix(&self) -> Result<CMatrix> {
        match &self.v {
            Some(v) => {
                let v = v.to_matrix()?;
                symspace::check_two_body(&v, self.d)?;
                Ok(v)
            }
            None => Ok(CMatrix::zeros((self.d + 1).pow(2), (self.d + 1).pow(2))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        match self.kind {
            EnsembleKind::Uniform => Ok(()),
            EnsembleKind::Noninteracting => self.epsilons().map(|_| ()),
            EnsembleKind::Meanfield => {
                self.t_matrix()?;
                self.v_matrix()?;
                Ok(())
            }
        }
    }

    /// The ensemble density on `H^(n)`.
    pub fn density(&self, n: usize) -> Result<SymOperator> {
        match self.kind {
            EnsembleKind::Uniform => uniform_ensemble(n, self.d),
            EnsembleKind::Noninteracting => gibbs_noninteracting(n, self.d, self.beta_eff(n), self.epsilons()?),
            EnsembleKind::Meanfield => {
                gibbs_meanfield(n, self.d, self.beta_eff(n), &self.t_matrix()?, &self.v_matrix()?)
            }
        }
    }

    /// The m-particle reduction of the n-particle ensemble.
    pub fn reduced(&self, n: usize, m: usize) -> Result<SymOperator> {
        match self.kind {
            EnsembleKind::Uniform => {
                let zeros = vec![0.0; self.d + 1];
                noninteracting_reduced(n, m, self.d, 0.0, &zeros)
            }
            EnsembleKind::Noninteracting => noninteracting_reduced(n, m, self.d, self.beta_eff(n), self.epsilons()?),
            EnsembleKind::Meanfield => reduction::reduce_sym(&self.density(n)?, m),
        }
    }
}

/// Occupation-diagonal density `Σ_n w(n) P_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalDensity {
    pub n: usize,
    pub d: usize,
    pub weights: Vec<f64>,
}

impl DiagonalDensity {
    pub fn to_operator(&self) -> Result<SymOperator> {
        SymOperator::from_diagonal(self.n, self.d, &self.weights)
    }

    pub fn reduce(&self, m: usize) -> Result<SymOperator> {
        reduction::reduce_diagonal_ensemble(&self.weights, self.n, self.d, m)
    }
}

pub fn uniform_weights(n: usize, d: usize) -> Result<DiagonalDensity> {
    let dim = occupation::Capacity::default().check_sym_dim(n, d)?;
    Ok(DiagonalDensity { n, d, weights: vec![1.0 / dim as f64; dim] })
}

/// `Σ_n / Tr Σ_n` on `H^(n)`.
pub fn uniform_ensemble(n: usize, d: usize) -> Result<SymOperator> {
    uniform_weights(n, d)?.to_operator()
}

fn check_epsilons(d: usize, epsilons: &[f64]) -> Result<()> {
    if epsilons.len() != d + 1 {
        return Err(Error::mismatch(format!("{} epsilons for d = {d}", epsilons.len())));
    }
    if epsilons.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("epsilons must be finite"));
    }
    Ok(())
}

/// Reference energy for Boltzmann factors so every exponent is `≤ 0`.
fn energy_shift(beta: f64, epsilons: &[f64]) -> f64 {
    let fold = if beta >= 0.0 { f64::min } else { f64::max };
    epsilons.iter().copied().reduce(fold).unwrap_or(0.0)
}

/// Boltzmann weights `∏ e^{-β n_i ε_i} / Z` over the canonical n-basis.
pub fn noninteracting_weights(n: usize, d: usize, beta_eff: f64, epsilons: &[f64]) -> Result<DiagonalDensity> {
    check_epsilons(d, epsilons)?;
    let basis = SymBasis::new(n, d)?;
    let shift = energy_shift(beta_eff, epsilons);
    let mut weights: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| {
            let e: f64 = s.counts().iter().zip(epsilons).map(|(&k, &eps)| k as f64 * (eps - shift)).sum();
            (-beta_eff * e).exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Numerical(format!("partition sum {z} after shifting")));
    }
    for w in &mut weights {
        *w /= z;
    }
    Ok(DiagonalDensity { n, d, weights })
}

/// Noninteracting Gibbs density on `H^(n)` at inverse temperature `beta_eff`.
pub fn gibbs_noninteracting(n: usize, d: usize, beta_eff: f64, epsilons: &[f64]) -> Result<SymOperator> {
    noninteracting_weights(n, d, beta_eff, epsilons)?.to_operator()
}

/// `[t^n] ∏_i (x_i t)^{m_i} / (1 - x_i t)^{m_i + 1} = Σ_{#n = n} ∏ x_i^{n_i} C(n_i, m_i)`.
fn binomial_moment_sum(n: usize, ms: &[u32], x: &[f64]) -> f64 {
    let mut s = vec![0.0; n + 1];
    s[0] = 1.0;
    for (&mi, &xi) in ms.iter().zip(x) {
        let shift = mi as usize;
        if shift > 0 {
            let scale = xi.powi(mi as i32);
            for k in (0..=n).rev() {
                s[k] = if k >= shift { s[k - shift] * scale } else { 0.0 };
            }
        }
        // multiply by 1 / (1 - x t), m_i + 1 times
        for _ in 0..=mi {
            for k in 1..=n {
                s[k] += xi * s[k - 1];
            }
        }
    }
    s[n]
}

/// `Γ_{n:m}` for the noninteracting ensemble without enumerating the n-basis.
///
/// The diagonal entry for `m` is `m! A_m / (n (n-1) ⋯ (n-m+1) A_0)` with
/// `A_m = Σ_{#n=n} ∏ e^{-β n_i ε_i} C(n_i, m_i)`, evaluated as a generating
/// function coefficient in `O(n (m + d))` operations.
pub fn noninteracting_reduced(n: usize, m: usize, d: usize, beta_eff: f64, epsilons: &[f64]) -> Result<SymOperator> {
    check_epsilons(d, epsilons)?;
    if m > n {
        return Err(Error::invalid(format!("cannot reduce {n} particles to {m}")));
    }
    let shift = energy_shift(beta_eff, epsilons);
    let x: Vec<f64> = epsilons.iter().map(|&e| (-beta_eff * (e - shift)).exp()).collect();
    let small = SymBasis::new(m, d)?;
    let z = binomial_moment_sum(n, &vec![0; d + 1], &x);
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Numerical(format!("partition sum {z} is not finite and positive")));
    }
    let falling: f64 = (0..m).map(|r| (n - r) as f64).product();
    let m_fact: f64 = (1..=m).map(|k| k as f64).product();
    let diag = small
        .states()
        .iter()
        .map(|ms| {
            let a = binomial_moment_sum(n, ms.counts(), &x);
            if !a.is_finite() {
                return Err(Error::Numerical("binomial moment overflowed".into()));
            }
            Ok(m_fact * a / (falling * z))
        })
        .collect::<Result<Vec<_>>>()?;
    SymOperator::from_diagonal(m, d, &diag)
}

/// Mean-field Gibbs density `e^{-β H_n} / Tr e^{-β H_n}` on `H^(n)`.
pub fn gibbs_meanfield(n: usize, d: usize, beta_eff: f64, t: &CMatrix, v: &CMatrix) -> Result<SymOperator> {
    if t.nrows() != d + 1 {
        return Err(Error::mismatch(format!("t is {}x{}, d = {d}", t.nrows(), t.ncols())));
    }
    let h = symspace::lift_two_body_meanfield(t, v, n)?;
    let g = operators::gibbs_matrix(h.matrix(), beta_eff)?;
    SymOperator::new(n, d, g)
}

/// Diagonal single-particle operator `diag(ε)`.
pub fn diagonal_operator(epsilons: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(epsilons.len(), epsilons.iter().map(|&e| C64::new(e, 0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{max_entry_diff, trace_distance_matrices};
    use crate::symspace::EmbeddingIsometry;
    use rand::{RngExt, SeedableRng};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn random_hermitian(dim: usize, rng: &mut impl rand::Rng) -> CMatrix {
        let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&a + a.adjoint()) * c(0.5)
    }

    #[test]
    fn uniform_examples() {
        let u = uniform_ensemble(2, 1).unwrap();
        assert_eq!(u.diagonal(), vec![1.0 / 3.0; 3]);
        assert!(u.is_diagonal());
        assert!((u.trace().re - 1.0).abs() < 1e-15);
        let r = reduction::reduce_sym(&u, 1).unwrap();
        assert!(max_entry_diff(r.matrix(), &(CMatrix::identity(2, 2) * c(0.5))) < 1e-15);
    }

    #[test]
    fn noninteracting_examples() {
        let eps = [0.0, 1.0];
        let g0 = gibbs_noninteracting(3, 1, 0.0, &eps).unwrap();
        assert!(max_entry_diff(g0.matrix(), uniform_ensemble(3, 1).unwrap().matrix()) < 1e-15);

        // weights (1, 1/2, 1/4) / (7/4); one-body marginal diag(5/7, 2/7)
        let g = gibbs_noninteracting(2, 1, 2f64.ln(), &eps).unwrap();
        let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (a, b) in g.diagonal().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let r = reduction::reduce_sym(&g, 1).unwrap();
        assert!((r.diagonal()[0] - 5.0 / 7.0).abs() < 1e-15);
        assert!((r.diagonal()[1] - 2.0 / 7.0).abs() < 1e-15);

        let flat = gibbs_noninteracting(4, 2, 3.7, &[1.5, 1.5, 1.5]).unwrap();
        assert!(max_entry_diff(flat.matrix(), uniform_ensemble(4, 2).unwrap().matrix()) < 1e-15);
    }

    #[test]
    fn large_beta_does_not_overflow() {
        let g = gibbs_noninteracting(50, 2, 500.0, &[0.0, 3.0, 7.0]).unwrap();
        assert!((g.diagonal()[0] - 1.0).abs() < 1e-12);
        let g = gibbs_noninteracting(50, 2, -500.0, &[0.0, 3.0, 7.0]).unwrap();
        assert!((g.diagonal().last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_match_lifted_hamiltonian() {
        let eps = [0.2, -0.4, 1.1];
        let beta = 0.9;
        let h = symspace::lift_one_body(&diagonal_operator(&eps), 4).unwrap();
        let raw: Vec<f64> = (0..h.dim()).map(|i| (-beta * h.matrix()[(i, i)].re).exp()).collect();
        let z: f64 = raw.iter().sum();
        let w = noninteracting_weights(4, 2, beta, &eps).unwrap();
        for (a, b) in w.weights.iter().zip(&raw) {
            assert!((a - b / z).abs() < 1e-14);
        }
    }

    #[test]
    fn recurrence_matches_enumeration() {
        for (n, d, beta) in [(6, 1, 0.7), (9, 2, -0.3), (12, 3, 1.9), (7, 2, 0.0)] {
            let eps: Vec<f64> = (0..=d).map(|i| 0.3 * i as f64 + 0.1 * (i * i) as f64).collect();
            let dens = noninteracting_weights(n, d, beta, &eps).unwrap();
            for m in 0..=n.min(4) {
                let a = noninteracting_reduced(n, m, d, beta, &eps).unwrap();
                let b = dens.reduce(m).unwrap();
                assert!(max_entry_diff(a.matrix(), b.matrix()) < 1e-13, "n={n} d={d} m={m}");
            }
        }
    }

    #[test]
    fn recurrence_scales_to_large_n() {
        let r = noninteracting_reduced(10_000, 2, 3, 1.0 / 10_000.0, &[0.0, 0.5, 1.0, 1.5]).unwrap();
        r.check_density(1e-10).unwrap();
        let r = noninteracting_reduced(10_000, 1, 1, 2.0, &[0.0, 1.0]).unwrap();
        assert!(r.diagonal()[0] > 1.0 - 1e-4);
    }

    #[test]
    fn meanfield_reduces_to_noninteracting() {
        let eps = [0.0, 0.4, 1.3];
        let t = diagonal_operator(&eps);
        let zero = CMatrix::zeros(9, 9);
        let a = gibbs_meanfield(4, 2, 0.8, &t, &zero).unwrap();
        let b = gibbs_noninteracting(4, 2, 0.8, &eps).unwrap();
        assert!(max_entry_diff(a.matrix(), b.matrix()) < 1e-12);

        // scalar interaction cancels in the normalization
        let vc = CMatrix::identity(9, 9) * c(2.5);
        let cst = gibbs_meanfield(4, 2, 0.8, &t, &vc).unwrap();
        assert!(max_entry_diff(cst.matrix(), a.matrix()) < 1e-12);
    }

    #[test]
    fn meanfield_general_t_is_unitarily_equivalent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let t = random_hermitian(2, &mut rng);
        let zero = CMatrix::zeros(4, 4);
        let g = gibbs_meanfield(5, 1, 1.3, &t, &zero).unwrap();
        let eig = nalgebra::SymmetricEigen::new(t.clone());
        let eps: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let diag = gibbs_noninteracting(5, 1, 1.3, &eps).unwrap();
        let sg = operators::hermitian_eigenvalues(g.matrix());
        let sd = operators::hermitian_eigenvalues(diag.matrix());
        for (a, b) in sg.iter().zip(&sd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn meanfield_matches_full_tensor_gibbs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, d, beta) = (4, 1, 0.6);
        let t = random_hermitian(2, &mut rng);
        let a = random_hermitian(4, &mut rng);
        let s = operators::swap(2);
        let v = (&a + &s * &a * &s) * c(0.5);
        let g = gibbs_meanfield(n, d, beta, &t, &v).unwrap();
        let h = operators::full_tensor_hamiltonian(&t, Some(&v), 1.0 / (n as f64 - 1.0), n).unwrap();
        let sym = operators::symmetrize(n, d).unwrap();
        let e = operators::hermitian_function(&h, |x| (-beta * x).exp()).unwrap() * sym.matrix();
        let full = &e / e.trace();
        let oracle = EmbeddingIsometry::new(n, d).unwrap().compress(&full).unwrap();
        assert!(max_entry_diff(g.matrix(), oracle.matrix()) < 1e-10);
        g.check_density(1e-12).unwrap();
    }

    #[test]
    fn ensembles_absorb_permutations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let t = random_hermitian(2, &mut rng);
        let v = CMatrix::identity(4, 4) * c(0.3) + operators::swap(2) * c(0.2);
        let specs = [
            EnsembleSpec::uniform(1),
            EnsembleSpec::noninteracting(1, 1.0, true, vec![0.0, 1.0]),
            EnsembleSpec::meanfield(1.5, false, &t, &v),
        ];
        for spec in &specs {
            for n in 2..=4 {
                let dens = spec.density(n).unwrap();
                let full = EmbeddingIsometry::new(n, 1).unwrap().expand(&dens).unwrap();
                for pi in operators::all_permutations(n) {
                    let u = operators::permutation_operator(&pi, 1).unwrap();
                    assert!(max_entry_diff(&(&full * u.matrix()), &full) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gibbs_is_continuous_in_beta() {
        let eps = [0.0, 1.0, 2.0];
        let base = gibbs_noninteracting(6, 2, 1.0, &eps).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let delta = 10f64.powi(-k);
            let moved = gibbs_noninteracting(6, 2, 1.0 + delta, &eps).unwrap();
            let dist = trace_distance_matrices(base.matrix(), moved.matrix()).unwrap();
            // Lipschitz: distance ≤ L δ with L bounded by the energy spread.
            assert!(dist <= 12.0 * delta);
            assert!(dist < last);
            last = dist;
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec = EnsembleSpec::noninteracting(1, 1.0, true, vec![0.0, 1.0]);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"kind":"noninteracting","n":0,"d":1,"beta":1.0,"scaled":true,"epsilons":[0.0,1.0]}"#);
        let bad = r#"{"kind":"uniform","d":1,"bogus":3}"#;
        assert!(serde_json::from_str::<EnsembleSpec>(bad).is_err());
        let back: EnsembleSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(spec.beta_eff(4), 0.25);
    }

    #[test]
    fn spec_validation() {
        let mut spec = EnsembleSpec::noninteracting(2, 1.0, true, vec![0.0, 1.0]);
        assert!(spec.validate().is_err());
        spec.epsilons = Some(vec![0.0, 1.0, 2.0]);
        assert!(spec.validate().is_ok());
        let mut bad_v = CMatrix::zeros(4, 4);
        bad_v[(1, 1)] = c(1.0);
        let mf = EnsembleSpec::meanfield(1.0, true, &CMatrix::identity(2, 2), &bad_v);
        assert!(mf.validate().is_err());
    }
}
