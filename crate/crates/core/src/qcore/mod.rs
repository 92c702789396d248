//! Dense complex linear algebra for finite-dimensional quantum states.
//!
//! Every joint operator uses the fixed factor order `S ⊗ A ⊗ E`, with `S` the
//! slowest-varying index and `E` the fastest. [`HilbertFactorization::flat_index`]
//! is the single place that convention is encoded.

mod ops;
mod random;
mod space;
mod state;

pub use ops::{
    is_unitary, kron, partial_trace, partial_trace_matrix, project_renormalize, tensor_product,
    trace_norm, unitary_deviation, Tensor,
};
pub use random::{
    derive_seed, ginibre, haar_unitary, rng_from_seed, sample_pure, sample_state, sample_unitary,
    state_from_rng, SeededRng,
};
pub use space::{Factor, HilbertFactorization, Space};
pub use state::{hermitian_eigen, hermitian_eigenvalues, DensityMatrix, Projector, PureState};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for exact structural identities (hermiticity, idempotence, unitarity).
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Slack allowed on derived inequalities to absorb accumulated rounding.
pub const INEQUALITY_TOL: f64 = 1e-9;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Computational basis vector `|index⟩` of dimension `dim`.
pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = c(1.0);
    v
}

/// `|u⟩⟨v|`
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}
