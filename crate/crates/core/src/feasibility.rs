//! Spectral feasibility of a unitary connecting the initial and final joint states.
//!
//! The final joint state has the apparatus pinned to `|a_θ⟩` and the system
//! pinned near `|o_θ⟩`, so it carries at least `(d_S − 1)·d_E` small
//! eigenvalues. The initial state only has that many if the environment
//! concentrates on a dominant subspace of rank `D <= d_E / d_S`.

use crate::error::{Error, Result};
use crate::qcore::{hermitian_eigen, hermitian_eigenvalues, DensityMatrix, HilbertFactorization, Projector};

/// Comparison slack when testing a tail weight against `epsilon_max`.
const EPSILON_CMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Tail weight outside the chosen dominant subspace.
    pub epsilon: f64,
    /// Smallest dominant rank meeting `epsilon_max`.
    pub dominant_rank: usize,
    /// `D <= floor(d_E / d_S)`.
    pub dimension_ok: bool,
    /// `d_S·(d_E − D)`: small eigenvalues of `ρ_S ⊗ |a_0⟩⟨a_0| ⊗ ρ_E` beyond the apparatus kernel.
    pub small_eigenvalue_count: usize,
    /// `(d_S − 1)·d_E`: small eigenvalues the final joint state must carry.
    pub required_small_count: usize,
    /// Number of environment eigenvalues below `threshold`.
    pub observed_small_eigenvalues: usize,
    /// `epsilon_max / (d_S·d_E)`.
    pub threshold: f64,
    pub epsilon_max: f64,
}

/// Tail weight and projector of the best rank-`D` dominant subspace of `ρ_E`.
pub fn dominant_epsilon(rho_e: &DensityMatrix, rank: usize) -> Result<(f64, Projector)> {
    let dim = rho_e.dim();
    if rank == 0 || rank > dim {
        return Err(Error::RankOutOfRange { rank, dim });
    }
    let (vals, vecs) = hermitian_eigen(rho_e.matrix());
    let epsilon = tail_weight(&vals, rank);
    let projector = Projector::from_orthonormal(&vecs[..rank], dim)?;
    Ok((epsilon, projector))
}

/// Sum of all but the `rank` largest eigenvalues, clamped to `[0, 1]`.
fn tail_weight(descending: &[f64], rank: usize) -> f64 {
    if rank >= descending.len() {
        return 0.0;
    }
    // summed smallest-first for accuracy
    descending[rank..].iter().rev().sum::<f64>().clamp(0.0, 1.0)
}

pub fn check_feasibility(
    rho_e: &DensityMatrix,
    fact: &HilbertFactorization,
    epsilon_max: f64,
) -> Result<FeasibilityReport> {
    if rho_e.dim() != fact.environment {
        return Err(Error::DimensionMismatch { expected: fact.environment, found: rho_e.dim() });
    }
    if !(0.0..=1.0).contains(&epsilon_max) {
        return Err(Error::InvalidParameter(format!("epsilon_max {epsilon_max} outside [0, 1]")));
    }
    let vals = hermitian_eigenvalues(rho_e.matrix());
    let d_e = fact.environment;
    let d_s = fact.system;
    let dominant_rank = (1..=d_e)
        .find(|&rank| tail_weight(&vals, rank) <= epsilon_max + EPSILON_CMP_TOL)
        .unwrap_or(d_e);
    let threshold = epsilon_max / (d_s * d_e) as f64;
    Ok(FeasibilityReport {
        epsilon: tail_weight(&vals, dominant_rank),
        dominant_rank,
        dimension_ok: dominant_rank <= d_e / d_s,
        small_eigenvalue_count: d_s * (d_e - dominant_rank),
        required_small_count: (d_s - 1) * d_e,
        observed_small_eigenvalues: vals.iter().filter(|v| **v < threshold).count(),
        threshold,
        epsilon_max,
    })
}

/// Necessary condition for a unitary to map `rho_i` onto `rho_f`: equal spectra.
pub fn spectra_compatible(rho_i: &DensityMatrix, rho_f: &DensityMatrix, tol: f64) -> Result<bool> {
    if rho_i.dim() != rho_f.dim() {
        return Err(Error::DimensionMismatch { expected: rho_i.dim(), found: rho_f.dim() });
    }
    let a = rho_i.eigenvalues();
    let b = rho_f.eigenvalues();
    Ok(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol))
}
