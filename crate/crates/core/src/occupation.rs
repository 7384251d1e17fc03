//! Occupation-number multi-indices and the combinatorics of the symmetric
//! subspace.
//!
//! An occupation vector `(n_0, …, n_d)` counts how many of the bosons sit in
//! each single-particle basis state. For fixed `(n, d)` the vectors are listed
//! in colexicographic order, i.e. sorted by the reversed tuple: `(n, 0, …, 0)`
//! has ordinal 0 and `(0, …, 0, n)` comes last. All counting is done in exact
//! integers; callers convert to floating point at the end.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts `(n_0, …, n_d)` of particles per single-particle level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationVector {
    counts: Vec<u32>,
}

impl OccupationVector {
    /// Panics on an empty count list (there is always at least one level).
    pub fn new(counts: Vec<u32>) -> Self {
        assert!(!counts.is_empty(), "occupation vector needs d+1 >= 1 entries");
        Self { counts }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0; d + 1])
    }

    /// The condensed vector `(n, 0, …, 0)`.
    pub fn condensed(n: u32, d: usize) -> Self {
        let mut counts = vec![0; d + 1];
        counts[0] = n;
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// `#n`, the particle number.
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// `d`, so that there are `d + 1` levels.
    pub fn d(&self) -> usize {
        self.counts.len() - 1
    }

    /// Componentwise `self ≤ other`.
    pub fn fits_in(&self, other: &OccupationVector) -> bool {
        self.counts.len() == other.counts.len()
            && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &OccupationVector) -> Option<OccupationVector> {
        if !other.fits_in(self) {
            return None;
        }
        Some(Self::new(
            self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &OccupationVector) -> OccupationVector {
        assert_eq!(self.counts.len(), other.counts.len());
        Self::new(self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect())
    }

    /// Lowers level `k` by one; `None` if it is empty.
    pub fn lowered(&self, k: usize) -> Option<OccupationVector> {
        if self.counts[k] == 0 {
            return None;
        }
        let mut counts = self.counts.clone();
        counts[k] -= 1;
        Some(Self::new(counts))
    }

    pub fn raised(&self, j: usize) -> OccupationVector {
        let mut counts = self.counts.clone();
        counts[j] += 1;
        Self::new(counts)
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Position of an occupation vector in the canonical enumeration for `(n, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymBasisIndex(pub usize);

/// Size limits for enumerations and full-tensor objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    /// Largest symmetric-subspace dimension that will be enumerated.
    pub max_sym_dim: u64,
    /// Largest `(d+1)^n` for full-tensor vectors.
    pub max_tensor_dim: u64,
    /// Largest side of a dense matrix, full-tensor or symmetric.
    pub max_dense_side: u64,
}

impl Default for Capacity {
    fn default() -> Self {
        Self {
            max_sym_dim: 1_000_000,
            max_tensor_dim: 1 << 24,
            max_dense_side: 4096,
        }
    }
}

impl Capacity {
    pub fn check_sym_dim(&self, n: usize, d: usize) -> Result<usize> {
        let dim = sym_dim(n, d)?;
        if dim > self.max_sym_dim {
            return Err(Error::Capacity {
                what: "symmetric subspace dimension",
                required: dim as u128,
                limit: self.max_sym_dim as u128,
            });
        }
        Ok(dim as usize)
    }

    pub fn check_tensor_dim(&self, n: usize, d: usize) -> Result<usize> {
        let dim = tensor_dim(n, d)?;
        if dim > self.max_tensor_dim as u128 {
            return Err(Error::Capacity {
                what: "full tensor dimension",
                required: dim,
                limit: self.max_tensor_dim as u128,
            });
        }
        Ok(dim as usize)
    }

    /// Like [`Capacity::check_tensor_dim`], for objects stored as dense matrices.
    pub fn check_dense_side(&self, n: usize, d: usize) -> Result<usize> {
        let dim = self.check_tensor_dim(n, d)?;
        if dim as u64 > self.max_dense_side {
            return Err(Error::Capacity {
                what: "dense full-tensor matrix side",
                required: dim as u128,
                limit: self.max_dense_side as u128,
            });
        }
        Ok(dim)
    }

    /// Like [`Capacity::check_sym_dim`], for dense operators on `H^(n)`.
    pub fn check_sym_dense_side(&self, n: usize, d: usize) -> Result<usize> {
        let dim = self.check_sym_dim(n, d)?;
        if dim as u64 > self.max_dense_side {
            return Err(Error::Capacity {
                what: "dense symmetric-subspace matrix side",
                required: dim as u128,
                limit: self.max_dense_side as u128,
            });
        }
        Ok(dim)
    }
}

/// `(d+1)^n` as an exact integer.
pub fn tensor_dim(n: usize, d: usize) -> Result<u128> {
    let base = d as u128 + 1;
    let exp = u32::try_from(n).map_err(|_| Error::Overflow("tensor_dim"))?;
    base.checked_pow(exp).ok_or(Error::Overflow("tensor_dim"))
}

/// Exact binomial coefficient, `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(acc, den);
        let (a, den) = (acc / g, den / g);
        let num = num / den; // den divides num after removing the common factor with acc
        acc = a.checked_mul(num)?;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n + d, d)`, the dimension of the n-boson symmetric subspace.
pub fn sym_dim(n: usize, d: usize) -> Result<u64> {
    let v = binomial((n + d) as u64, d as u64).ok_or(Error::Overflow("sym_dim"))?;
    u64::try_from(v).map_err(|_| Error::Overflow("sym_dim"))
}

/// Multinomial coefficient `n! / ∏ n_i!`.
pub fn multinomial(n: u32, occ: &OccupationVector) -> Result<u128> {
    if occ.total() != n {
        return Err(Error::mismatch(format!(
            "occupation {occ} has total {} but n = {n}",
            occ.total()
        )));
    }
    // Product of binomials C(n_0 + … + n_i, n_i).
    let mut acc: u128 = 1;
    let mut running: u64 = 0;
    for &c in occ.counts() {
        running += c as u64;
        let b = binomial(running, c as u64).ok_or(Error::Overflow("multinomial"))?;
        acc = acc.checked_mul(b).ok_or(Error::Overflow("multinomial"))?;
    }
    Ok(acc)
}

/// All occupation vectors with total `n` over `d + 1` levels, in canonical order.
pub fn enumerate_occupations(n: usize, d: usize) -> Result<Vec<OccupationVector>> {
    enumerate_occupations_with(n, d, &Capacity::default())
}

pub fn enumerate_occupations_with(
    n: usize,
    d: usize,
    capacity: &Capacity,
) -> Result<Vec<OccupationVector>> {
    let dim = capacity.check_sym_dim(n, d)?;
    let n = u32::try_from(n).map_err(|_| Error::Overflow("enumerate_occupations"))?;
    let mut out = Vec::with_capacity(dim);
    let mut scratch = vec![0u32; d + 1];
    fill_colex(n, d, &mut scratch, &mut out);
    debug_assert_eq!(out.len(), dim);
    Ok(out)
}

// The last coordinate varies slowest; recursing on the prefix keeps the
// reversed tuples in ascending lexicographic order.
fn fill_colex(n: u32, last: usize, scratch: &mut [u32], out: &mut Vec<OccupationVector>) {
    if last == 0 {
        scratch[0] = n;
        out.push(OccupationVector::new(scratch.to_vec()));
        return;
    }
    for top in 0..=n {
        scratch[last] = top;
        fill_colex(n - top, last - 1, scratch, out);
    }
    scratch[last] = 0;
}

/// Occupation profile `N(x_1, …, x_m)` of a tuple of level indices.
pub fn occupation_profile(indices: &[usize], d: usize) -> Result<OccupationVector> {
    let mut counts = vec![0u32; d + 1];
    for &x in indices {
        if x > d {
            return Err(Error::invalid(format!("level index {x} out of range 0..={d}")));
        }
        counts[x] += 1;
    }
    Ok(OccupationVector::new(counts))
}

/// The occupation basis of one symmetric subspace with a reverse lookup.
#[derive(Clone, Debug)]
pub struct SymBasis {
    n: usize,
    d: usize,
    states: Vec<OccupationVector>,
    lookup: HashMap<OccupationVector, SymBasisIndex>,
}

impl SymBasis {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        Self::with_capacity(n, d, &Capacity::default())
    }

    pub fn with_capacity(n: usize, d: usize, capacity: &Capacity) -> Result<Self> {
        let states = enumerate_occupations_with(n, d, capacity)?;
        let lookup = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), SymBasisIndex(i)))
            .collect();
        Ok(Self { n, d, states, lookup })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[OccupationVector] {
        &self.states
    }

    pub fn state(&self, idx: SymBasisIndex) -> &OccupationVector {
        &self.states[idx.0]
    }

    pub fn index_of(&self, occ: &OccupationVector) -> Option<SymBasisIndex> {
        self.lookup.get(occ).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymBasisIndex, &OccupationVector)> {
        self.states.iter().enumerate().map(|(i, s)| (SymBasisIndex(i), s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(v: &[u32]) -> OccupationVector {
        OccupationVector::new(v.to_vec())
    }

    // Independent count: walk all (d+1)^n words and collect distinct profiles.
    fn brute_force_profiles(n: usize, d: usize) -> Vec<OccupationVector> {
        let mut seen = std::collections::BTreeSet::new();
        let total = (d + 1).pow(n as u32);
        for mut w in 0..total {
            let mut idx = Vec::with_capacity(n);
            for _ in 0..n {
                idx.push(w % (d + 1));
                w /= d + 1;
            }
            seen.insert(occupation_profile(&idx, d).unwrap());
        }
        seen.into_iter().collect()
    }

    #[test]
    fn enumerate_small_cases() {
        assert_eq!(
            enumerate_occupations(2, 1).unwrap(),
            vec![occ(&[2, 0]), occ(&[1, 1]), occ(&[0, 2])]
        );
        assert_eq!(enumerate_occupations(0, 3).unwrap(), vec![occ(&[0, 0, 0, 0])]);
        assert_eq!(enumerate_occupations(3, 2).unwrap().len(), 10);
        assert_eq!(brute_force_profiles(3, 2).len(), 10);
    }

    #[test]
    fn enumeration_order_golden() {
        let got: Vec<String> = enumerate_occupations(2, 2)
            .unwrap()
            .iter()
            .map(|o| o.to_string())
            .collect();
        assert_eq!(
            got,
            ["(2,0,0)", "(1,1,0)", "(0,2,0)", "(1,0,1)", "(0,1,1)", "(0,0,2)"]
        );
        let got: Vec<String> = enumerate_occupations(3, 1)
            .unwrap()
            .iter()
            .map(|o| o.to_string())
            .collect();
        assert_eq!(got, ["(3,0)", "(2,1)", "(1,2)", "(0,3)"]);
    }

    #[test]
    fn enumeration_matches_brute_force_set() {
        for d in 0..=3 {
            for n in 0..=5 {
                let mut listed = enumerate_occupations(n, d).unwrap();
                assert_eq!(listed.len() as u64, sym_dim(n, d).unwrap());
                listed.sort();
                assert_eq!(listed, brute_force_profiles(n, d), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn enumeration_is_colex_sorted() {
        let list = enumerate_occupations(5, 3).unwrap();
        for w in list.windows(2) {
            let a: Vec<u32> = w[0].counts().iter().rev().copied().collect();
            let b: Vec<u32> = w[1].counts().iter().rev().copied().collect();
            assert!(a < b);
        }
        assert_eq!(list[0], OccupationVector::condensed(5, 3));
    }

    #[test]
    fn capacity_limit_is_enforced() {
        let cap = Capacity { max_sym_dim: 9, ..Capacity::default() };
        let err = enumerate_occupations_with(3, 2, &cap).unwrap_err();
        assert!(err.is_capacity());
        assert!(enumerate_occupations_with(2, 2, &cap).is_ok());
    }

    #[test]
    fn multinomial_examples() {
        assert_eq!(multinomial(3, &occ(&[1, 1, 1])).unwrap(), 6);
        assert_eq!(multinomial(3, &occ(&[3, 0, 0])).unwrap(), 1);
        assert_eq!(multinomial(6, &occ(&[2, 2, 2])).unwrap(), 90);
        assert!(matches!(multinomial(4, &occ(&[1, 1, 1])), Err(Error::Mismatch(_))));
    }

    #[test]
    fn multinomial_matches_arrangement_count() {
        // Arrangements of the word 001122 counted by brute force over 3^6 words.
        let target = occ(&[2, 2, 2]);
        let mut count = 0;
        for mut w in 0..3usize.pow(6) {
            let mut idx = vec![];
            for _ in 0..6 {
                idx.push(w % 3);
                w /= 3;
            }
            if occupation_profile(&idx, 2).unwrap() == target {
                count += 1;
            }
        }
        assert_eq!(count, 90);
    }

    #[test]
    fn multinomial_overflow_is_reported() {
        let big = occ(&[40, 40, 40, 40]);
        assert!(matches!(multinomial(160, &big), Err(Error::Overflow(_))));
    }

    #[test]
    fn multinomials_sum_to_power() {
        for d in 0..=3usize {
            for n in 0..=12usize {
                let sum: u128 = enumerate_occupations(n, d)
                    .unwrap()
                    .iter()
                    .map(|o| multinomial(n as u32, o).unwrap())
                    .sum();
                assert_eq!(sum, ((d + 1) as u128).pow(n as u32), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn sym_dim_examples() {
        assert_eq!(sym_dim(2, 1).unwrap(), 3);
        assert_eq!(sym_dim(0, 5).unwrap(), 1);
        assert_eq!(sym_dim(3, 2).unwrap(), 10);
        assert_eq!(sym_dim(10_000, 3).unwrap(), 166_766_685_001);
    }

    #[test]
    fn binomial_against_pascal() {
        let mut row = vec![1u128];
        for n in 1..=60u64 {
            let mut next = vec![1u128; n as usize + 1];
            for k in 1..n as usize {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
            for k in 0..=n {
                assert_eq!(binomial(n, k).unwrap(), row[k as usize]);
            }
        }
    }

    #[test]
    fn profile_examples() {
        assert_eq!(occupation_profile(&[0, 1, 0], 1).unwrap(), occ(&[2, 1]));
        assert_eq!(occupation_profile(&[], 2).unwrap(), occ(&[0, 0, 0]));
        assert_eq!(occupation_profile(&[2, 2, 2, 0], 2).unwrap(), occ(&[1, 0, 3]));
        assert!(matches!(occupation_profile(&[3], 2), Err(Error::Invalid(_))));
    }

    #[test]
    fn basis_lookup_round_trips() {
        let basis = SymBasis::new(4, 2).unwrap();
        for (i, s) in basis.iter() {
            assert_eq!(basis.index_of(s), Some(i));
        }
        assert_eq!(basis.index_of(&occ(&[4, 0, 0])), Some(SymBasisIndex(0)));
        assert_eq!(basis.index_of(&occ(&[0, 0, 4])), Some(SymBasisIndex(basis.len() - 1)));
    }
}
