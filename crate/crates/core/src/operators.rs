//! Dense complex operators on `(C^{d+1})^{⊗n}`.
//!
//! Index convention: a basis vector `e_{i_1} ⊗ … ⊗ e_{i_n}` has flat index
//! `Σ_k i_k (d+1)^{n-k}`, so factor 1 is the most significant digit. This is
//! the convention of `nalgebra`'s Kronecker product.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::occupation::{self, Capacity};
use crate::{CMatrix, Error, Result, C64};

/// Relative Hermiticity tolerance used when none is given.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Operator on `n` tensor factors of dimension `local_dim` each.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    local_dim: usize,
    factors: usize,
    matrix: CMatrix,
}

impl DenseOperator {
    pub fn new(matrix: CMatrix, local_dim: usize, factors: usize) -> Result<Self> {
        let dim = checked_pow(local_dim, factors)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::mismatch(format!(
                "matrix is {}x{}, expected {dim}x{dim} for {factors} factors of dimension {local_dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { local_dim, factors, matrix })
    }

    /// Single-factor operator.
    pub fn single(matrix: CMatrix) -> Result<Self> {
        let local = matrix.nrows();
        Self::new(matrix, local, 1)
    }

    pub fn identity(local_dim: usize, factors: usize) -> Result<Self> {
        let dim = checked_pow(local_dim, factors)?;
        Self::new(CMatrix::identity(dim, dim), local_dim, factors)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        hermiticity_defect(&self.matrix) <= rel_tol * max_abs(&self.matrix).max(f64::MIN_POSITIVE)
    }
}

/// Density operator: Hermitian, unit trace, positive semidefinite, all
/// within `tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    op: DenseOperator,
    tolerance: f64,
}

impl DensityOperator {
    pub const DEFAULT_TOL: f64 = 1e-10;

    pub fn new(op: DenseOperator) -> Result<Self> {
        Self::with_tolerance(op, Self::DEFAULT_TOL)
    }

    pub fn with_tolerance(op: DenseOperator, tolerance: f64) -> Result<Self> {
        check_density(op.matrix(), tolerance)?;
        Ok(Self { op, tolerance })
    }

    pub fn op(&self) -> &DenseOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn into_op(self) -> DenseOperator {
        self.op
    }
}

/// Validates the density-operator invariants of a bare matrix.
pub fn check_density(m: &CMatrix, tolerance: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::mismatch("density matrix must be square"));
    }
    let defect = hermiticity_defect(m);
    if defect > tolerance {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > tolerance || tr.im.abs() > tolerance {
        return Err(Error::NotNormalized { sum: tr.re });
    }
    let min_eig = hermitian_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -tolerance {
        return Err(Error::invalid(format!("density has negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |A - A†|` entrywise.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `a - b`.
pub fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or(Error::Overflow("tensor dimension"))
}

/// Digits of `index` in base `local`, most significant first.
pub(crate) fn digits(mut index: usize, local: usize, n: usize, out: &mut [usize]) {
    for k in (0..n).rev() {
        out[k] = index % local;
        index /= local;
    }
}

pub(crate) fn from_digits(ds: &[usize], local: usize) -> usize {
    ds.iter().fold(0, |acc, &x| acc * local + x)
}

/// Checks that `pi` is a bijection of `0..n` (images written 0-based).
pub fn validate_permutation(pi: &[usize]) -> Result<()> {
    let mut seen = vec![false; pi.len()];
    for &p in pi {
        if p >= pi.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid(format!("{pi:?} is not a permutation")));
        }
    }
    Ok(())
}

/// `U_π` with `U_π(x_1⊗…⊗x_n) = x_{π(1)}⊗…⊗x_{π(n)}`; `pi[k]` is the
/// 0-based image of position `k`.
pub fn permutation_operator(pi: &[usize], d: usize) -> Result<DenseOperator> {
    validate_permutation(pi)?;
    let n = pi.len();
    let local = d + 1;
    let dim = Capacity::default().check_dense_side(n, d)?;
    let mut m = CMatrix::zeros(dim, dim);
    for (col, row) in permutation_action(pi, local, dim) {
        m[(row, col)] = C64::new(1.0, 0.0);
    }
    DenseOperator::new(m, local, n)
}

// (input index, output index) pairs of U_π on basis vectors.
fn permutation_action(pi: &[usize], local: usize, dim: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = pi.len();
    let mut inp = vec![0usize; n];
    let mut out = vec![0usize; n];
    (0..dim).map(move |col| {
        digits(col, local, n, &mut inp);
        for k in 0..n {
            out[k] = inp[pi[k]];
        }
        (col, from_digits(&out, local))
    })
}

/// Inverse permutation in the same 0-based image convention.
pub fn inverse_permutation(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (k, &p) in pi.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

/// Largest n for which the symmetrizer is built from the permutation sum.
pub const MAX_PERMUTATION_SUM_N: usize = 8;

/// `Σ_n = (1/n!) Σ_π U_π` on the full tensor space.
pub fn symmetrize(n: usize, d: usize) -> Result<DenseOperator> {
    if n > MAX_PERMUTATION_SUM_N {
        return Err(Error::Capacity {
            what: "permutation sum for the symmetrizer (n)",
            required: n as u128,
            limit: MAX_PERMUTATION_SUM_N as u128,
        });
    }
    let local = d + 1;
    let dim = Capacity::default().check_dense_side(n, d)?;
    let perms = all_permutations(n);
    let weight = 1.0 / perms.len() as f64;
    let mut m = CMatrix::zeros(dim, dim);
    for pi in &perms {
        for (col, row) in permutation_action(pi, local, dim) {
            m[(row, col)].re += weight;
        }
    }
    DenseOperator::new(m, local, n)
}

/// `A^{⊗k}`.
pub fn tensor_power(a: &DenseOperator, k: usize) -> Result<DenseOperator> {
    if k == 0 {
        return Err(Error::invalid("tensor power needs k >= 1"));
    }
    let factors = a.factors().checked_mul(k).ok_or(Error::Overflow("tensor_power"))?;
    Capacity::default().check_dense_side(factors, a.local_dim() - 1)?;
    let mut acc = a.matrix().clone();
    for _ in 1..k {
        acc = acc.kronecker(a.matrix());
    }
    DenseOperator::new(acc, a.local_dim(), factors)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn require_hermitian(m: &CMatrix) -> Result<()> {
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian { deviation: defect });
    }
    Ok(())
}

/// `f(A)` for Hermitian `A` through its eigendecomposition.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    require_hermitian(m)?;
    let eig = SymmetricEigen::new(m.clone());
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let fl = f(lambda);
        scaled.column_mut(j).scale_mut(fl);
    }
    Ok(scaled * u.adjoint())
}

/// `exp(s A)` for Hermitian `A`.
pub fn hermitian_exp(a: &DenseOperator, s: f64) -> Result<DenseOperator> {
    require_hermitian(a.matrix())?;
    if s == 0.0 {
        return DenseOperator::identity(a.local_dim(), a.factors());
    }
    let m = hermitian_function(a.matrix(), |x| (s * x).exp())?;
    DenseOperator::new(m, a.local_dim(), a.factors())
}

/// `exp(-β H) / Tr exp(-β H)` with the spectrum shifted before exponentiation.
pub fn gibbs_matrix(h: &CMatrix, beta: f64) -> Result<CMatrix> {
    require_hermitian(h)?;
    let eig = SymmetricEigen::new(h.clone());
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let shift = if beta >= 0.0 {
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let weights: Vec<f64> = vals.iter().map(|&e| (-beta * (e - shift)).exp()).collect();
    let z: f64 = weights.iter().sum();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Numerical(format!("Gibbs normalization {z} is not finite and positive")));
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(w / z);
    }
    Ok(scaled * u.adjoint())
}

/// `Σ |λ_i|` for a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|x| x.abs()).sum()
}

/// Spectral norm `max |λ_i|` of a Hermitian matrix.
pub fn spectral_norm_hermitian(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// `(1/2) Σ |eigenvalues of ρ - σ|` on bare matrices.
pub fn trace_distance_matrices(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::mismatch(format!(
            "trace distance between {:?} and {:?} operators",
            rho.shape(),
            sigma.shape()
        )));
    }
    let diff = rho - sigma;
    // Diagonal inputs skip the eigensolver.
    let off_diag = diff
        .iter()
        .enumerate()
        .any(|(k, z)| k % (diff.nrows() + 1) != 0 && *z != C64::new(0.0, 0.0));
    let norm = if off_diag {
        trace_norm_hermitian(&diff)
    } else {
        diff.diagonal().iter().map(|z| z.re.abs()).sum()
    };
    Ok((0.5 * norm).clamp(0.0, 1.0))
}

pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    trace_distance_matrices(rho.matrix(), sigma.matrix())
}

/// Matrix unit `Q_{jk} = |e_j⟩⟨e_k|` on `C^dim`.
pub fn matrix_unit(j: usize, k: usize, dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(j, k)] = C64::new(1.0, 0.0);
    m
}

/// The swap operator on `C^local ⊗ C^local`.
pub fn swap(local: usize) -> CMatrix {
    let dim = local * local;
    let mut m = CMatrix::zeros(dim, dim);
    for a in 0..local {
        for b in 0..local {
            m[(b * local + a, a * local + b)] = C64::new(1.0, 0.0);
        }
    }
    m
}

/// Embeds `op`, acting on the factors listed in `sites` (0-based, in the
/// order of `op`'s own factors), into `n` factors with identities elsewhere.
pub fn embed_local(op: &CMatrix, sites: &[usize], n: usize, local: usize) -> Result<CMatrix> {
    let k = sites.len();
    let op_dim = checked_pow(local, k)?;
    if op.nrows() != op_dim || op.ncols() != op_dim {
        return Err(Error::mismatch("local operator dimension does not match its sites"));
    }
    if sites.iter().any(|&s| s >= n) {
        return Err(Error::invalid(format!("sites {sites:?} out of range for {n} factors")));
    }
    let dim = checked_pow(local, n)?;
    let mut out = CMatrix::zeros(dim, dim);
    let mut col_digits = vec![0usize; n];
    let mut row_digits = vec![0usize; n];
    let mut sub = vec![0usize; k];
    for col in 0..dim {
        digits(col, local, n, &mut col_digits);
        let sub_col = sites.iter().fold(0, |acc, &s| acc * local + col_digits[s]);
        row_digits.copy_from_slice(&col_digits);
        for sub_row in 0..op_dim {
            let v = op[(sub_row, sub_col)];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            digits(sub_row, local, k, &mut sub);
            for (&s, &x) in sites.iter().zip(&sub) {
                row_digits[s] = x;
            }
            out[(from_digits(&row_digits, local), col)] += v;
        }
    }
    Ok(out)
}

/// `Σ_i T_i + coupling Σ_{i<j} V_{ij}` on the full tensor space.
pub fn full_tensor_hamiltonian(t: &CMatrix, v: Option<&CMatrix>, coupling: f64, n: usize) -> Result<CMatrix> {
    let local = t.nrows();
    Capacity::default().check_dense_side(n, local - 1)?;
    let dim = occupation::tensor_dim(n, local - 1)? as usize;
    let mut h = CMatrix::zeros(dim, dim);
    for i in 0..n {
        h += embed_local(t, &[i], n, local)?;
    }
    if let Some(v) = v {
        for i in 0..n {
            for j in i + 1..n {
                h += embed_local(v, &[i, j], n, local)? * C64::new(coupling, 0.0);
            }
        }
    }
    Ok(h)
}

/// JSON wire form shared by every operator type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorJson {
    pub dim: usize,
    pub factors: usize,
    pub local_dim: usize,
    /// Row-major `[re, im]` pairs.
    pub entries: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl OperatorJson {
    pub fn from_matrix(m: &CMatrix, local_dim: usize, factors: usize) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        Self { dim, factors, local_dim, entries, n: None, d: None }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.entries.len() != self.dim * self.dim {
            return Err(Error::mismatch(format!(
                "{} entries for a {}x{} operator",
                self.entries.len(),
                self.dim,
                self.dim
            )));
        }
        Ok(CMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.entries.iter().map(|[re, im]| C64::new(*re, *im)),
        ))
    }
}

impl Serialize for DenseOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorJson::from_matrix(&self.matrix, self.local_dim, self.factors).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseOperator {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = OperatorJson::deserialize(de)?;
        let m = raw.to_matrix().map_err(serde::de::Error::custom)?;
        DenseOperator::new(m, raw.local_dim, raw.factors).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|&x| c(x))))
    }

    fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&a + a.adjoint()) * c(0.5)
    }

    #[test]
    fn identity_permutation_is_identity() {
        let u = permutation_operator(&[0, 1, 2], 1).unwrap();
        assert_eq!(u.matrix(), &CMatrix::identity(8, 8));
    }

    #[test]
    fn swap_on_two_qubits() {
        let u = permutation_operator(&[1, 0], 1).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        for (r, cidx) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            expected[(r, cidx)] = c(1.0);
        }
        assert_eq!(u.matrix(), &expected);
        assert_eq!(u.matrix(), &swap(2));
    }

    #[test]
    fn permutation_moves_factors_as_documented() {
        // U_π(x1⊗x2⊗x3) = x_{π(1)}⊗x_{π(2)}⊗x_{π(3)} with π = (2,3,1).
        let pi = [1, 2, 0];
        let u = permutation_operator(&pi, 2).unwrap();
        let input = from_digits(&[0, 1, 2], 3);
        let output = from_digits(&[1, 2, 0], 3);
        assert_eq!(u.matrix()[(output, input)], c(1.0));
    }

    #[test]
    fn permutation_times_inverse_is_identity() {
        for pi in all_permutations(4) {
            let u = permutation_operator(&pi, 1).unwrap();
            let v = permutation_operator(&inverse_permutation(&pi), 1).unwrap();
            let prod = u.matrix() * v.matrix();
            assert!(max_entry_diff(&prod, &CMatrix::identity(16, 16)) < 1e-12);
        }
    }

    #[test]
    fn invalid_permutation_rejected() {
        assert!(permutation_operator(&[0, 0], 1).is_err());
        assert!(permutation_operator(&[0, 2], 1).is_err());
    }

    #[test]
    fn all_permutations_counts() {
        assert_eq!(all_permutations(0).len(), 1);
        assert_eq!(all_permutations(4).len(), 24);
        let mut p = all_permutations(4);
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 24);
    }

    #[test]
    fn symmetrizer_small_cases() {
        let s1 = symmetrize(1, 3).unwrap();
        assert_eq!(s1.matrix(), &CMatrix::identity(4, 4));

        let s2 = symmetrize(2, 1).unwrap();
        let expected = (CMatrix::identity(4, 4) + swap(2)) * c(0.5);
        assert!(max_entry_diff(s2.matrix(), &expected) < 1e-15);
        assert!((s2.trace().re - 3.0).abs() < 1e-12);

        let s3 = symmetrize(3, 1).unwrap();
        assert!((s3.trace().re - 4.0).abs() < 1e-8);
    }

    #[test]
    fn symmetrizer_is_idempotent_with_sym_dim_trace() {
        for (n, d) in [(2, 2), (3, 2), (4, 1), (4, 2)] {
            let s = symmetrize(n, d).unwrap();
            let sq = s.matrix() * s.matrix();
            assert!(max_entry_diff(&sq, s.matrix()) < 1e-10);
            let dim = occupation::sym_dim(n, d).unwrap() as f64;
            assert!((s.trace().re - dim).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetrizer_absorbs_every_permutation() {
        for n in 1..=4 {
            let s = symmetrize(n, 1).unwrap();
            for pi in all_permutations(n) {
                let u = permutation_operator(&pi, 1).unwrap();
                assert!(max_entry_diff(&(s.matrix() * u.matrix()), s.matrix()) < 1e-12);
                assert!(max_entry_diff(&(u.matrix() * s.matrix()), s.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn symmetrizer_capacity() {
        assert!(symmetrize(9, 1).unwrap_err().is_capacity());
    }

    #[test]
    fn tensor_power_examples() {
        let id = DenseOperator::single(CMatrix::identity(2, 2)).unwrap();
        let p = tensor_power(&id, 3).unwrap();
        assert_eq!(p.matrix(), &CMatrix::identity(8, 8));
        assert_eq!(p.factors(), 3);

        let d2 = tensor_power(&DenseOperator::single(diag(&[2.0, 3.0])).unwrap(), 2).unwrap();
        assert_eq!(d2.matrix(), &diag(&[4.0, 6.0, 6.0, 9.0]));

        let v = nalgebra::DVector::from_vec(vec![c(0.6), C64::new(0.0, 0.8)]);
        let proj = DenseOperator::single(&v * v.adjoint()).unwrap();
        let p3 = tensor_power(&proj, 3).unwrap();
        let rank = hermitian_eigenvalues(p3.matrix()).iter().filter(|x| x.abs() > 1e-10).count();
        assert_eq!(rank, 1);
        assert!(max_entry_diff(&(p3.matrix() * p3.matrix()), p3.matrix()) < 1e-12);

        assert!(tensor_power(&id, 0).is_err());
    }

    #[test]
    fn tensor_power_trace_is_multiplicative() {
        let a = DenseOperator::single(random_hermitian(3, 7)).unwrap();
        let tr = a.trace();
        let p = tensor_power(&a, 3).unwrap();
        let expected = tr * tr * tr;
        assert!((p.trace() - expected).norm() <= 1e-10 * expected.norm());
    }

    #[test]
    fn exp_examples() {
        let a = DenseOperator::single(random_hermitian(3, 1)).unwrap();
        let e0 = hermitian_exp(&a, 0.0).unwrap();
        assert_eq!(e0.matrix(), &CMatrix::identity(3, 3));

        let d = DenseOperator::single(diag(&[0.0, 1.0])).unwrap();
        let e = hermitian_exp(&d, -1.0).unwrap();
        assert!(max_entry_diff(e.matrix(), &diag(&[1.0, (-1.0f64).exp()])) < 1e-14);

        let plus = hermitian_exp(&a, 0.7).unwrap();
        let minus = hermitian_exp(&a, -0.7).unwrap();
        assert!(max_entry_diff(&(plus.matrix() * minus.matrix()), &CMatrix::identity(3, 3)) < 1e-10);
        let comm = plus.matrix() * a.matrix() - a.matrix() * plus.matrix();
        assert!(max_abs(&comm) < 1e-10);
        assert!(plus.is_hermitian(1e-12));
        assert!(hermitian_eigenvalues(plus.matrix())[0] > 0.0);
    }

    #[test]
    fn exp_rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = c(1.0);
        let a = DenseOperator::single(m).unwrap();
        assert!(matches!(hermitian_exp(&a, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn gibbs_matrix_matches_exp() {
        let h = random_hermitian(4, 3);
        let g = gibbs_matrix(&h, 1.3).unwrap();
        let e = hermitian_exp(&DenseOperator::single(h).unwrap(), -1.3).unwrap();
        let expected = e.matrix() / e.trace();
        assert!(max_entry_diff(&g, &expected) < 1e-12);
    }

    #[test]
    fn trace_distance_examples() {
        let dens = |v: &[f64]| DensityOperator::new(DenseOperator::single(diag(v)).unwrap()).unwrap();
        let a = dens(&[1.0, 0.0]);
        let b = dens(&[0.0, 1.0]);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let h = dens(&[0.5, 0.5]);
        let q = dens(&[0.75, 0.25]);
        assert!((trace_distance(&h, &q).unwrap() - 0.25).abs() < 1e-15);
        let small = DensityOperator::new(DenseOperator::single(diag(&[1.0])).unwrap()).unwrap();
        assert!(matches!(trace_distance(&h, &small), Err(Error::Mismatch(_))));
    }

    #[test]
    fn trace_distance_of_pure_states() {
        // For pure states the distance is sqrt(1 - |<u,v>|^2).
        let u = nalgebra::DVector::from_vec(vec![c(1.0), c(0.0)]);
        let t: f64 = 0.3;
        let v = nalgebra::DVector::from_vec(vec![c(t.cos()), C64::new(0.0, t.sin())]);
        let d = trace_distance_matrices(&(&u * u.adjoint()), &(&v * v.adjoint())).unwrap();
        assert!((d - t.sin()).abs() < 1e-12);
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(DenseOperator::single(diag(&[0.5, 0.4])).unwrap()).is_err());
        assert!(DensityOperator::new(DenseOperator::single(diag(&[1.5, -0.5])).unwrap()).is_err());
    }

    #[test]
    fn embed_local_matches_kronecker() {
        let t = random_hermitian(2, 11);
        let i2 = CMatrix::identity(2, 2);
        let middle = embed_local(&t, &[1], 3, 2).unwrap();
        assert!(max_entry_diff(&middle, &i2.kronecker(&t).kronecker(&i2)) < 1e-15);
        let v = random_hermitian(4, 12);
        let first_two = embed_local(&v, &[0, 1], 3, 2).unwrap();
        assert!(max_entry_diff(&first_two, &v.kronecker(&i2)) < 1e-15);
        // V on (1,3) equals SWAP_{23} V_{12} SWAP_{23}.
        let s23 = embed_local(&swap(2), &[1, 2], 3, 2).unwrap();
        let v13 = embed_local(&v, &[0, 2], 3, 2).unwrap();
        assert!(max_entry_diff(&v13, &(&s23 * &first_two * &s23)) < 1e-14);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let a = DenseOperator::new(random_hermitian(4, 5) * c(1.0 / 3.0), 2, 2).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let back: DenseOperator = serde_json::from_str(&text).unwrap();
        for (x, y) in a.matrix().iter().zip(back.matrix().iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["dim"], 4);
        assert_eq!(v["factors"], 2);
        assert_eq!(v["local_dim"], 2);
        assert_eq!(v["entries"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn json_rejects_inconsistent_shapes() {
        let bad = r#"{"dim":2,"factors":1,"local_dim":2,"entries":[[1,0]]}"#;
        assert!(serde_json::from_str::<DenseOperator>(bad).is_err());
        let bad = r#"{"dim":2,"factors":2,"local_dim":2,"entries":[[1,0],[0,0],[0,0],[1,0]]}"#;
        assert!(serde_json::from_str::<DenseOperator>(bad).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_any_entries(vals in proptest::collection::vec(any::<(f64, f64)>().prop_filter("finite", |(a, b)| a.is_finite() && b.is_finite()), 9)) {
            let m = CMatrix::from_row_iterator(3, 3, vals.iter().map(|&(a, b)| C64::new(a, b)));
            let op = DenseOperator::single(m).unwrap();
            let back: DenseOperator = serde_json::from_str(&serde_json::to_string(&op).unwrap()).unwrap();
            prop_assert_eq!(op, back);
        }

        #[test]
        fn trace_distance_symmetric_and_bounded(seed in 0u64..1000) {
            use rand::{RngExt, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mk = || {
                let a = CMatrix::from_fn(3, 3, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let p = &a * a.adjoint();
                let tr = p.trace();
                p / tr
            };
            let (r, s) = (mk(), mk());
            let d1 = trace_distance_matrices(&r, &s).unwrap();
            let d2 = trace_distance_matrices(&s, &r).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d1));
        }
    }
}
