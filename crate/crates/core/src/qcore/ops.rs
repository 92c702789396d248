use super::state::hermitize;
use super::{c, hermitian_eigenvalues, max_abs, CMatrix, DensityMatrix, Factor, PureState, Space};
use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b` (row-major block convention: `a` indexes slowest).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Objects that compose under `⊗` with their dimension tags.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let space = self.space().tensor(other.space())?;
        Ok(DensityMatrix::from_evolved(kron(self.matrix(), other.matrix()), space))
    }
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let space = self.space().tensor(other.space())?;
        let amps = self.amplitudes().kronecker(other.amplitudes());
        PureState::normalized(amps, space)
    }
}

pub fn tensor_product<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

/// Partial trace of a square operator over a multipartite space.
///
/// `dims` lists the factor dimensions (first factor slowest-varying) and
/// `keep[i]` selects whether factor `i` survives.
pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[bool]) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if dims.len() != keep.len() {
        return Err(Error::InvalidParameter("dims and keep lengths differ".into()));
    }
    let total: usize = dims.iter().product();
    if total != m.nrows() {
        return Err(Error::DimensionMismatch { expected: total, found: m.nrows() });
    }
    if !keep.iter().any(|k| *k) {
        return Err(Error::EmptySelection);
    }
    let kept_dim: usize = dims.iter().zip(keep).filter(|(_, k)| **k).map(|(d, _)| d).product();
    let traced_dim = total / kept_dim;

    // groups[t][k] = flat index whose traced part is t and kept part is k
    let mut groups = vec![vec![0usize; kept_dim]; traced_dim];
    for flat in 0..total {
        let mut rest = flat;
        let (mut k, mut t) = (0usize, 0usize);
        let (mut k_stride, mut t_stride) = (1usize, 1usize);
        for (d, kept) in dims.iter().zip(keep).rev() {
            let digit = rest % d;
            rest /= d;
            if *kept {
                k += digit * k_stride;
                k_stride *= d;
            } else {
                t += digit * t_stride;
                t_stride *= d;
            }
        }
        groups[t][k] = flat;
    }

    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for group in &groups {
        for (r, &fr) in group.iter().enumerate() {
            for (col, &fc) in group.iter().enumerate() {
                out[(r, col)] += m[(fr, fc)];
            }
        }
    }
    Ok(out)
}

/// Reduced state on the factors in `keep`. The input must carry a factored tag.
pub fn partial_trace(rho: &DensityMatrix, keep: &[Factor]) -> Result<DensityMatrix> {
    let space = rho.space();
    if space.is_anonymous() {
        return Err(Error::InvalidParameter("partial trace needs a factored space".into()));
    }
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    for f in keep {
        if !space.contains(*f) {
            return Err(Error::InvalidParameter(format!("factor {} not in {space}", f.symbol())));
        }
    }
    let dims: Vec<usize> = space.factors().iter().map(|(_, d)| *d).collect();
    let mask: Vec<bool> = space.factors().iter().map(|(f, _)| keep.contains(f)).collect();
    let reduced = partial_trace_matrix(rho.matrix(), &dims, &mask)?;
    let mut kept = Space::anonymous(1);
    for (f, d) in space.factors().iter().filter(|(f, _)| keep.contains(f)) {
        kept = if kept.is_anonymous() { Space::factor(*f, *d) } else { kept.tensor(&Space::factor(*f, *d))? };
    }
    Ok(DensityMatrix::from_evolved(reduced, kept))
}

/// Sum of singular values (no 1/2 factor; state distances lie in `[0, 2]`).
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = max_abs(m).max(1.0);
    if max_abs(&(m - m.adjoint())) <= 1e-12 * scale {
        Ok(hermitian_eigenvalues(&hermitize(m)).iter().map(|v| v.abs()).sum())
    } else {
        Ok(m.clone().singular_values().iter().sum())
    }
}

/// `P ρ P / tr(P ρ)`.
pub fn project_renormalize(rho: &DensityMatrix, projector: &super::Projector) -> Result<DensityMatrix> {
    if projector.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: projector.dim() });
    }
    let p = projector.matrix();
    let weight = projector.weight(rho);
    if weight <= 1e-12 {
        return Err(Error::DegenerateProjection(weight));
    }
    let projected = p * rho.matrix() * p * c(1.0 / weight);
    Ok(DensityMatrix::from_evolved(projected, rho.space().clone()))
}

/// `max |U†U − I|`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    unitary_deviation(u) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{basis_vector, sample_state, sample_unitary, HilbertFactorization, Projector};
    use num_complex::Complex64;

    fn id(n: usize) -> CMatrix {
        CMatrix::identity(n, n)
    }

    #[test]
    fn identity_tensor_identity() {
        assert_eq!(kron(&id(2), &id(2)), id(4));
    }

    #[test]
    fn basis_tensor_bookkeeping() {
        let zero = PureState::basis(Space::factor(Factor::System, 2), 0).unwrap();
        let one = PureState::basis(Space::factor(Factor::Environment, 2), 1).unwrap();
        let joint = tensor_product(&zero, &one).unwrap();
        assert_eq!(joint.amplitudes(), &basis_vector(4, 1));
        assert!(matches!(tensor_product(&one, &zero), Err(Error::FactorOrder(_))));
    }

    #[test]
    fn product_state_traces_back() {
        let fact = HilbertFactorization::new(2, 3, 2).unwrap();
        let rho_s = sample_state(2, 2, 1).unwrap().with_space(fact.space_of(&[Factor::System])).unwrap();
        let ready = PureState::basis(fact.space_of(&[Factor::Apparatus]), 0).unwrap().density();
        let rho_e = sample_state(2, 2, 2).unwrap().with_space(fact.space_of(&[Factor::Environment])).unwrap();
        let joint = rho_s.tensor(&ready).unwrap().tensor(&rho_e).unwrap();
        let back = partial_trace(&joint, &[Factor::System]).unwrap();
        assert!(max_abs(&(back.matrix() - rho_s.matrix())) < 1e-14);
        assert_eq!(back.space(), rho_s.space());
    }

    #[test]
    fn bell_pair_reduces_to_maximally_mixed() {
        let fact = HilbertFactorization::bare(2, 1, 2).unwrap();
        let mut amps = crate::qcore::CVector::zeros(4);
        amps[fact.flat_index(0, 0, 0)] = Complex64::new(1.0, 0.0);
        amps[fact.flat_index(1, 0, 1)] = Complex64::new(1.0, 0.0);
        let bell = PureState::normalized(amps, fact.joint()).unwrap().density();
        let s = partial_trace(&bell, &[Factor::System]).unwrap();
        assert!(max_abs(&(s.matrix() - id(2) * c(0.5))) < 1e-15);
    }

    #[test]
    fn empty_keep_rejected() {
        let fact = HilbertFactorization::bare(2, 1, 2).unwrap();
        let rho = DensityMatrix::maximally_mixed(fact.joint());
        assert_eq!(partial_trace(&rho, &[]), Err(Error::EmptySelection));
        assert_eq!(partial_trace_matrix(rho.matrix(), &[2, 1, 2], &[false; 3]), Err(Error::EmptySelection));
    }

    #[test]
    fn trace_norm_basics() {
        let rho = sample_state(3, 2, 9).unwrap();
        assert_eq!(trace_norm(&(rho.matrix() - rho.matrix())).unwrap(), 0.0);
        assert!((trace_norm(&id(2)).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(trace_norm(&CMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
        // non-Hermitian route: a nilpotent has singular values (1, 0)
        let mut n = CMatrix::zeros(2, 2);
        n[(0, 1)] = c(1.0);
        assert!((trace_norm(&n).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projection_cases() {
        let fixed = DensityMatrix::diagonal(&[0.3, 0.7, 0.0], Space::anonymous(3)).unwrap();
        let p = Projector::from_orthonormal(&[basis_vector(3, 0), basis_vector(3, 1)], 3).unwrap();
        let out = project_renormalize(&fixed, &p).unwrap();
        assert!(max_abs(&(out.matrix() - fixed.matrix())) < 1e-15);

        let off = Projector::from_orthonormal(&[basis_vector(3, 2)], 3).unwrap();
        assert!(matches!(project_renormalize(&fixed, &off), Err(Error::DegenerateProjection(_))));

        let psi = PureState::normalized(
            crate::qcore::CVector::from_vec(vec![c(1.0), c(2.0), Complex64::new(0.0, 1.0)]),
            Space::anonymous(3),
        )
        .unwrap();
        let phi = PureState::normalized(
            crate::qcore::CVector::from_vec(vec![c(1.0), c(0.0), c(1.0)]),
            Space::anonymous(3),
        )
        .unwrap();
        let rank1 = Projector::from_orthonormal(&[phi.amplitudes().clone()], 3).unwrap();
        let out = project_renormalize(&psi.density(), &rank1).unwrap();
        assert!(max_abs(&(out.matrix() - phi.density().matrix())) < 1e-14);
    }

    #[test]
    fn unitary_checks() {
        let u = sample_unitary(6, 4).unwrap();
        assert!(is_unitary(&u, 1e-12));
        assert!(!is_unitary(&(u * c(1.01)), 1e-8));
        assert!(!is_unitary(&CMatrix::zeros(2, 3), 1.0));
    }
}
