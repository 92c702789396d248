use nalgebra::SymmetricEigen;

use super::{c, max_abs, outer, CMatrix, CVector, Space, STRUCTURAL_TOL};
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_REPAIR_TOL, 0)` are clamped; anything lower is rejected.
const PSD_REPAIR_TOL: f64 = 1e-10;

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Eigen-decomposition of a Hermitian matrix, sorted by descending eigenvalue.
///
/// Each eigenvector is phase-fixed so that its first largest-modulus entry is
/// real and positive; exactly tied eigenvalues are ordered lexicographically
/// on the phase-fixed vectors.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut pairs: Vec<(f64, CVector)> = (0..m.nrows())
        .map(|j| (eig.eigenvalues[j], phase_fixed(eig.eigenvectors.column(j).into_owned())))
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| lb.total_cmp(la).then_with(|| lexicographic(va, vb)));
    pairs.into_iter().unzip()
}

fn phase_fixed(mut v: CVector) -> CVector {
    let peak = v.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if peak == 0.0 {
        return v;
    }
    let anchor = v.iter().find(|z| z.norm() >= peak * (1.0 - 1e-12)).copied().unwrap();
    let phase = anchor.conj() / anchor.norm();
    v.iter_mut().for_each(|z| *z *= phase);
    v
}

fn lexicographic(a: &CVector, b: &CVector) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.re.total_cmp(&y.re).then_with(|| x.im.total_cmp(&y.im));
        if ord.is_ne() {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// A unit vector tagged with the space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    space: Space,
}

impl PureState {
    pub fn new(amplitudes: CVector, space: Space) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("pure state norm {norm} != 1")));
        }
        Ok(Self { amplitudes, space })
    }

    /// Normalizes `amplitudes` before wrapping.
    pub fn normalized(amplitudes: CVector, space: Space) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::new(amplitudes.unscale(norm), space)
    }

    pub fn basis(space: Space, index: usize) -> Result<Self> {
        if index >= space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: index + 1 });
        }
        Ok(Self { amplitudes: super::basis_vector(space.dim(), index), space })
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix { matrix: outer(&self.amplitudes, &self.amplitudes), space: self.space.clone() }
    }

    pub fn with_space(self, space: Space) -> Result<Self> {
        if space.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: space.dim() });
        }
        Ok(Self { space, ..self })
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    space: Space,
}

impl DensityMatrix {
    /// Validates all density-matrix invariants, repairing eigenvalues that are
    /// negative by less than `1e-10`.
    pub fn new(matrix: CMatrix, space: Space) -> Result<Self> {
        let matrix = Self::checked_shape(matrix, &space)?;
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {dev:e})")));
        }
        let matrix = hermitize(&matrix);
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let (vals, vecs) = hermitian_eigen(&matrix);
        let min = vals.last().copied().unwrap_or(0.0);
        if min < -PSD_REPAIR_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        if min >= 0.0 {
            return Ok(Self { matrix, space });
        }
        let clamped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        let mut repaired = CMatrix::zeros(matrix.nrows(), matrix.ncols());
        for (val, vec) in clamped.iter().zip(&vecs) {
            if *val > 0.0 {
                repaired += outer(vec, vec) * c(val / total);
            }
        }
        Ok(Self { matrix: hermitize(&repaired), space })
    }

    /// Wraps a matrix known to be a state up to rounding: the output of a
    /// unitary conjugation, partial trace or convex combination of valid states.
    /// Only hermiticity is enforced; the positivity check is skipped.
    pub(crate) fn from_evolved(matrix: CMatrix, space: Space) -> Self {
        debug_assert_eq!(matrix.nrows(), space.dim());
        Self { matrix: hermitize(&matrix), space }
    }

    fn checked_shape(matrix: CMatrix, space: &Space) -> Result<CMatrix> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        if matrix.nrows() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: matrix.nrows() });
        }
        Ok(matrix)
    }

    pub fn maximally_mixed(space: Space) -> Self {
        let d = space.dim();
        Self { matrix: CMatrix::identity(d, d) * c(1.0 / d as f64), space }
    }

    /// `Σ p_i |v_i⟩⟨v_i|` for orthonormal `v_i` and probabilities `p_i`.
    pub fn from_spectrum(probabilities: &[f64], vectors: &[CVector], space: Space) -> Result<Self> {
        if probabilities.len() != vectors.len() {
            return Err(Error::InvalidState("spectrum and eigenvector counts differ".into()));
        }
        let d = space.dim();
        let mut m = CMatrix::zeros(d, d);
        for (p, v) in probabilities.iter().zip(vectors) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            m += outer(v, v) * c(*p);
        }
        Self::new(m, space)
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probabilities: &[f64], space: Space) -> Result<Self> {
        let d = probabilities.len();
        let m = CMatrix::from_diagonal(&CVector::from_iterator(d, probabilities.iter().map(|p| c(*p))));
        Self::new(m, space)
    }

    /// `Σ w_i ρ_i`; weights must be a probability vector.
    pub fn mixture(weights: &[f64], states: &[&DensityMatrix]) -> Result<Self> {
        let first = states.first().ok_or(Error::EmptyEnsemble)?;
        if weights.len() != states.len() {
            return Err(Error::InvalidWeights("weight and state counts differ".into()));
        }
        if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights("weights must be nonnegative and sum to 1".into()));
        }
        let d = first.dim();
        let mut m = CMatrix::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.space != first.space {
                return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
            }
            m += &s.matrix * c(*w);
        }
        Ok(Self::from_evolved(m, first.space.clone()))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn with_space(self, space: Space) -> Result<Self> {
        if space.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: space.dim() });
        }
        Ok(Self { space, ..self })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Descending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// `⟨v|ρ|v⟩`
    pub fn expectation(&self, v: &CVector) -> f64 {
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }

    /// `U ρ U†`
    pub fn conjugate(&self, unitary: &CMatrix) -> Result<Self> {
        if unitary.nrows() != self.dim() || unitary.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: unitary.nrows() });
        }
        Ok(Self::from_evolved(unitary * &self.matrix * unitary.adjoint(), self.space.clone()))
    }

    /// Deviations from the state invariants: (hermiticity, |trace - 1|, min eigenvalue).
    pub fn invariant_report(&self) -> (f64, f64, f64) {
        let min = self.eigenvalues().last().copied().unwrap_or(0.0);
        (hermitian_deviation(&self.matrix), (self.trace() - 1.0).abs(), min)
    }
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// Orthogonal projector of a given rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: CMatrix,
    rank: usize,
}

impl Projector {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        let herm = hermitian_deviation(&matrix);
        if herm > STRUCTURAL_TOL {
            return Err(Error::InvalidProjector(format!("not Hermitian ({herm:e})")));
        }
        let idem = max_abs(&(&matrix * &matrix - &matrix));
        if idem > STRUCTURAL_TOL {
            return Err(Error::InvalidProjector(format!("not idempotent ({idem:e})")));
        }
        let tr = matrix.trace().re;
        let rank = tr.round();
        if (tr - rank).abs() > 1e-8 || rank < 0.0 {
            return Err(Error::InvalidProjector(format!("trace {tr} is not an integer rank")));
        }
        Ok(Self { matrix, rank: rank as usize })
    }

    /// Projector onto the span of orthonormal `vectors`.
    pub fn from_orthonormal(vectors: &[CVector], dim: usize) -> Result<Self> {
        for (i, u) in vectors.iter().enumerate() {
            if u.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: u.len() });
            }
            for (j, v) in vectors.iter().enumerate().take(i + 1) {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (u.dotc(v) - c(expect)).norm() > STRUCTURAL_TOL {
                    return Err(Error::InvalidProjector("vectors are not orthonormal".into()));
                }
            }
        }
        let mut m = CMatrix::zeros(dim, dim);
        for v in vectors {
            m += outer(v, v);
        }
        Ok(Self { matrix: m, rank: vectors.len() })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn complement(&self) -> Projector {
        let d = self.dim();
        Projector { matrix: CMatrix::identity(d, d) - &self.matrix, rank: d - self.rank }
    }

    /// `tr(P ρ)`
    pub fn weight(&self, rho: &DensityMatrix) -> f64 {
        (&self.matrix * rho.matrix()).trace().re
    }
}
