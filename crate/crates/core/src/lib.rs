//! Numerical laboratory for bosonic de Finetti states.
//!
//! Finite-n bosonic ensembles on `C^{d+1}` are built in occupation-number
//! coordinates, reduced to m-particle marginals, and compared with their
//! explicit large-n limits written as mixtures over the simplex × torus.
//!
//! Module map:
//!
//! * [`occupation`]: occupation vectors, enumeration order, exact combinatorics.
//! * [`operators`]: dense operators on `(C^{d+1})^{⊗n}`: permutations,
//!   symmetrizer, tensor powers, Hermitian exponentials, trace distance.
//! * [`symspace`]: the symmetric subspace, its embedding, second-quantized lifts.
//! * [`reduction`]: partial traces (combinatorial, symmetric-basis, full-tensor).
//! * [`ensembles`]: uniform, noninteracting and mean-field Gibbs ensembles.
//! * [`definetti`]: limit densities, Monte Carlo and quadrature over the simplex.
//! * [`convergence`]: n-sweeps and the series/moment checks.

pub mod convergence;
pub mod definetti;
pub mod ensembles;
mod error;
pub mod occupation;
pub mod operators;
pub mod reduction;
pub mod simplex;
pub mod symspace;

pub use error::{Error, Result};

/// Complex scalar used for every operator entry.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
