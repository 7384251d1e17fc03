//! The symmetric subspace `H^(n)` in occupation coordinates.
//!
//! Operators on `H^(n)` are stored as matrices in the orthonormal basis
//! `Ψ_n`, ordered as in [`crate::occupation`]. One- and two-body
//! Hamiltonians are lifted with bosonic ladder operators, which never touch
//! the `(d+1)^n`-dimensional tensor space; [`EmbeddingIsometry`] provides the
//! full-tensor route used to check them at small `n`.

use serde::{Deserialize, Serialize};

use crate::occupation::{self, Capacity, OccupationVector, SymBasis};
use crate::operators::{self, OperatorJson};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Tolerance for the swap symmetry of two-body interactions.
pub const SWAP_TOL: f64 = 1e-10;

/// Operator on `H^(n)` in the occupation basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SymOperator {
    n: usize,
    d: usize,
    matrix: CMatrix,
}

impl SymOperator {
    pub fn new(n: usize, d: usize, matrix: CMatrix) -> Result<Self> {
        let dim = occupation::sym_dim(n, d)? as usize;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::mismatch(format!(
                "symmetric operator for n={n}, d={d} must be {dim}x{dim}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { n, d, matrix })
    }

    pub fn from_diagonal(n: usize, d: usize, diag: &[f64]) -> Result<Self> {
        let v = CVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(n, d, CMatrix::from_diagonal(&v))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
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

    /// Real parts of the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        operators::hermiticity_defect(&self.matrix)
            <= rel_tol * operators::max_abs(&self.matrix).max(f64::MIN_POSITIVE)
    }

    pub fn is_diagonal(&self) -> bool {
        let dim = self.dim();
        (0..dim).all(|i| (0..dim).all(|j| i == j || self.matrix[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn check_density(&self, tolerance: f64) -> Result<()> {
        operators::check_density(&self.matrix, tolerance)
    }

    pub fn to_json(&self) -> OperatorJson {
        let mut j = OperatorJson::from_matrix(&self.matrix, self.d + 1, self.n);
        j.n = Some(self.n);
        j.d = Some(self.d);
        j
    }

    pub fn from_json(j: &OperatorJson) -> Result<Self> {
        let (n, d) = match (j.n, j.d) {
            (Some(n), Some(d)) => (n, d),
            _ => return Err(Error::invalid("symmetric operator JSON needs n and d")),
        };
        Self::new(n, d, j.to_matrix()?)
    }
}

impl Serialize for SymOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymOperator {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = OperatorJson::deserialize(de)?;
        SymOperator::from_json(&raw).map_err(serde::de::Error::custom)
    }
}

/// `Ψ_n` in full-tensor coordinates: every word with occupation profile `n`
/// carries amplitude `1/√(n choose n)`.
pub fn basis_vector(occ: &OccupationVector) -> Result<CVector> {
    let n = occ.total() as usize;
    let d = occ.d();
    let dim = Capacity::default().check_tensor_dim(n, d)?;
    let amp = 1.0 / (occupation::multinomial(n as u32, occ)? as f64).sqrt();
    let mut v = CVector::zeros(dim);
    let mut word = vec![0usize; n];
    for idx in 0..dim {
        operators::digits(idx, d + 1, n, &mut word);
        if &occupation::occupation_profile(&word, d)? == occ {
            v[idx] = C64::new(amp, 0.0);
        }
    }
    Ok(v)
}

/// The isometry `J: H^(n) → H^{⊗n}` whose columns are the `Ψ_n`.
#[derive(Clone, Debug)]
pub struct EmbeddingIsometry {
    n: usize,
    d: usize,
    columns: CMatrix,
}

impl EmbeddingIsometry {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        let full = Capacity::default().check_dense_side(n, d)?;
        let basis = SymBasis::new(n, d)?;
        let mut columns = CMatrix::zeros(full, basis.len());
        let amps: Vec<f64> = basis
            .states()
            .iter()
            .map(|s| occupation::multinomial(n as u32, s).map(|m| 1.0 / (m as f64).sqrt()))
            .collect::<Result<_>>()?;
        let mut word = vec![0usize; n];
        for idx in 0..full {
            operators::digits(idx, d + 1, n, &mut word);
            let profile = occupation::occupation_profile(&word, d)?;
            let col = basis.index_of(&profile).expect("profile of an n-word lies in the basis").0;
            columns[(idx, col)] = C64::new(amps[col], 0.0);
        }
        Ok(Self { n, d, columns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    /// `J S J†`.
    pub fn expand(&self, op: &SymOperator) -> Result<CMatrix> {
        if op.n() != self.n || op.d() != self.d {
            return Err(Error::mismatch("operator and embedding disagree on (n, d)"));
        }
        Ok(&self.columns * op.matrix() * self.columns.adjoint())
    }

    /// `J† A J`.
    pub fn compress(&self, full: &CMatrix) -> Result<SymOperator> {
        if full.nrows() != self.columns.nrows() || full.ncols() != self.columns.nrows() {
            return Err(Error::mismatch("full-tensor operator has the wrong dimension"));
        }
        SymOperator::new(self.n, self.d, self.columns.adjoint() * full * &self.columns)
    }

    /// `J J†`, the symmetrizer without the permutation sum.
    pub fn projector(&self) -> CMatrix {
        &self.columns * self.columns.adjoint()
    }
}

fn check_single_particle(t: &CMatrix) -> Result<usize> {
    if !t.is_square() || t.nrows() == 0 {
        return Err(Error::mismatch("single-particle operator must be square and non-empty"));
    }
    let defect = operators::hermiticity_defect(t);
    if defect > operators::HERMITIAN_TOL * operators::max_abs(t).max(1.0) {
        return Err(Error::NotHermitian { deviation: defect });
    }
    Ok(t.nrows() - 1)
}

/// Checks that `V` on `C^{d+1} ⊗ C^{d+1}` is Hermitian and commutes with the swap.
pub fn check_two_body(v: &CMatrix, d: usize) -> Result<()> {
    let local = d + 1;
    if v.nrows() != local * local || v.ncols() != local * local {
        return Err(Error::mismatch(format!(
            "two-body operator must be {0}x{0}, got {1}x{2}",
            local * local,
            v.nrows(),
            v.ncols()
        )));
    }
    let defect = operators::hermiticity_defect(v);
    if defect > operators::HERMITIAN_TOL * operators::max_abs(v).max(1.0) {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let s = operators::swap(local);
    let comm = operators::max_abs(&(v * &s - &s * v));
    if comm > SWAP_TOL {
        return Err(Error::invalid(format!("two-body operator does not commute with the swap ({comm:e})")));
    }
    Ok(())
}

/// Ladder-operator helper: annihilate level `k`, returning the new state and
/// the factor `√n_k`.
fn annihilate(state: &OccupationVector, k: usize) -> Option<(OccupationVector, f64)> {
    let nk = state.counts()[k];
    state.lowered(k).map(|s| (s, (nk as f64).sqrt()))
}

fn create(state: &OccupationVector, j: usize) -> (OccupationVector, f64) {
    let nj = state.counts()[j];
    (state.raised(j), ((nj + 1) as f64).sqrt())
}

/// Matrix of `Σ_i T_i` on `H^(n)`: `Σ_{jk} T_{jk} a†_j a_k`.
pub fn lift_one_body(t: &CMatrix, n: usize) -> Result<SymOperator> {
    let d = check_single_particle(t)?;
    Capacity::default().check_sym_dense_side(n, d)?;
    let basis = SymBasis::new(n, d)?;
    let dim = basis.len();
    let mut m = CMatrix::zeros(dim, dim);
    for (col, state) in basis.iter() {
        for k in 0..=d {
            let Some((lowered, ak)) = annihilate(state, k) else { continue };
            for j in 0..=d {
                let tjk = t[(j, k)];
                if tjk == C64::new(0.0, 0.0) {
                    continue;
                }
                let (target, aj) = create(&lowered, j);
                let row = basis.index_of(&target).expect("number-conserving");
                m[(row.0, col.0)] += tjk * (ak * aj);
            }
        }
    }
    SymOperator::new(n, d, m)
}

/// Matrix of `Σ_{i<j} V_{ij}` on `H^(n)`:
/// `(1/2) Σ ⟨ab|V|ce⟩ a†_a a†_b a_e a_c`.
pub fn lift_two_body(v: &CMatrix, d: usize, n: usize) -> Result<SymOperator> {
    check_two_body(v, d)?;
    Capacity::default().check_sym_dense_side(n, d)?;
    let basis = SymBasis::new(n, d)?;
    let dim = basis.len();
    let local = d + 1;
    let mut m = CMatrix::zeros(dim, dim);
    if n < 2 {
        return SymOperator::new(n, d, m);
    }
    for (col, state) in basis.iter() {
        for c in 0..local {
            let Some((s1, f1)) = annihilate(state, c) else { continue };
            for e in 0..local {
                let Some((s2, f2)) = annihilate(&s1, e) else { continue };
                let lowered_amp = f1 * f2;
                for b in 0..local {
                    let (s3, f3) = create(&s2, b);
                    for a in 0..local {
                        let vab = v[(a * local + b, c * local + e)];
                        if vab == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let (target, f4) = create(&s3, a);
                        let row = basis.index_of(&target).expect("number-conserving");
                        m[(row.0, col.0)] += vab * (0.5 * lowered_amp * f3 * f4);
                    }
                }
            }
        }
    }
    SymOperator::new(n, d, m)
}

/// Mean-field Hamiltonian `Σ_i T_i + (1/(n-1)) Σ_{i<j} V_{ij}` on `H^(n)`.
pub fn lift_two_body_meanfield(t: &CMatrix, v: &CMatrix, n: usize) -> Result<SymOperator> {
    if n < 2 {
        return Err(Error::invalid(format!("mean-field Hamiltonian needs n >= 2, got {n}")));
    }
    let d = check_single_particle(t)?;
    let one = lift_one_body(t, n)?;
    let two = lift_two_body(v, d, n)?;
    let coupling = C64::new(1.0 / (n as f64 - 1.0), 0.0);
    SymOperator::new(n, d, one.into_matrix() + two.into_matrix() * coupling)
}

/// `W = T ⊗ I + I ⊗ T + V`, so that `H_n = (1/(n-1)) Σ_{i<j} W_{ij}`.
pub fn pair_operator(t: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let d = check_single_particle(t)?;
    check_two_body(v, d)?;
    let id = CMatrix::identity(d + 1, d + 1);
    Ok(t.kronecker(&id) + id.kronecker(t) + v)
}
