//! Diamond distance between unitary channels.

use nalgebra::Schur;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qcore::{c, ginibre, rng_from_seed, unitary_deviation, CMatrix};

/// Largest `‖U†U − I‖_max` accepted as unitary.
pub const UNITARY_TOL: f64 = 1e-8;

const SCHUR_EPS: f64 = 1e-14;

/// `‖U(·)U† − V(·)V†‖_⋄`.
///
/// With `{λ_j}` the eigenvalues of `V†U` and `d₀` the distance from the origin
/// to their convex hull, the value is `2√(1 − d₀²)`, or 2 when the hull
/// contains the origin.
pub fn diamond_distance_unitary(u: &CMatrix, v: &CMatrix) -> Result<f64> {
    let eigs = channel_eigenvalues(u, v)?;
    Ok(hull_diamond_value(&eigs))
}

/// Largest `‖Wv − λv‖` accepted from the Hermitian fast path.
const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// Rotation applied before taking the Hermitian part; any angle works, this
/// one just avoids the common `±θ` eigenvalue pairs.
const FAST_PATH_PHASE: f64 = 0.371_238_597;

/// Eigenvalues of `V†U`, projected onto the unit circle.
pub fn channel_eigenvalues(u: &CMatrix, v: &CMatrix) -> Result<Vec<Complex64>> {
    check_pair(u, v)?;
    let w = v.adjoint() * u;
    if let Some(eigs) = normal_eigenvalues(&w) {
        return Ok(eigs);
    }
    let n = w.nrows();
    let schur = Schur::try_new(w, SCHUR_EPS, 1000 * n.max(1)).ok_or(Error::NotUnitary(f64::NAN))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| unit(t[(i, i)])).collect())
}

/// `W` is normal, so eigenvectors of the Hermitian part of `e^{-iφ}W` are
/// eigenvectors of `W` unless two eigenvalues of `W` share a real part after
/// the rotation. Each candidate is checked by its residual; `None` means fall
/// back to a Schur decomposition.
fn normal_eigenvalues(w: &CMatrix) -> Option<Vec<Complex64>> {
    let phase = Complex64::from_polar(1.0, -FAST_PATH_PHASE);
    let h = (w * phase + w.adjoint() * phase.conj()) * c(0.5);
    let vecs = h.symmetric_eigen().eigenvectors;
    let mut eigs = Vec::with_capacity(w.nrows());
    for col in vecs.column_iter() {
        let wv = w * col;
        let lambda = col.dotc(&wv);
        if (wv - col * lambda).norm() > EIGEN_RESIDUAL_TOL {
            return None;
        }
        eigs.push(unit(lambda));
    }
    Some(eigs)
}

fn unit(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        c(1.0)
    }
}

fn check_pair(u: &CMatrix, v: &CMatrix) -> Result<()> {
    for m in [u, v] {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
    }
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch { expected: u.nrows(), found: v.nrows() });
    }
    for m in [u, v] {
        let dev = unitary_deviation(m);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
    }
    Ok(())
}

fn cross(o: Complex64, a: Complex64, b: Complex64) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
/// Duplicate and collinear points are dropped.
pub fn convex_hull(points: &[Complex64]) -> Vec<Complex64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<Complex64> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Complex64>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: Complex64, q: Complex64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return p.norm();
    }
    let t = (-(p.re * d.re + p.im * d.im) / len2).clamp(0.0, 1.0);
    (p + d * t).norm()
}

/// Distance from the origin to the convex hull of `points`; 0 if inside.
pub fn hull_distance_from_origin(points: &[Complex64]) -> f64 {
    nearest_edge(&convex_hull(points)).map_or(0.0, |(d, _, _)| d)
}

/// `(distance, p, q)` of the hull edge nearest the origin, or `None` when the
/// origin lies inside the hull.
fn nearest_edge(hull: &[Complex64]) -> Option<(f64, Complex64, Complex64)> {
    let origin = c(0.0);
    match hull.len() {
        0 => None,
        1 => Some((hull[0].norm(), hull[0], hull[0])),
        n => {
            if n >= 3 && (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], origin) >= 0.0) {
                return None;
            }
            let edges = if n == 2 { 1 } else { n };
            (0..edges)
                .map(|i| {
                    let (p, q) = (hull[i], hull[(i + 1) % n]);
                    (segment_distance(p, q), p, q)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
        }
    }
}

/// `2√(1 − d₀²)` for unit-modulus `eigs`.
///
/// The nearest hull edge of points on the unit circle is a chord `pq`, for
/// which `1 − d₀² = |p − q|²/4`; the value is then `|p − q|`, evaluated without
/// the cancellation in `1 − d₀²`.
pub fn hull_diamond_value(eigs: &[Complex64]) -> f64 {
    match nearest_edge(&convex_hull(eigs)) {
        None => 2.0,
        Some((_, p, q)) => (p - q).norm().min(2.0),
    }
}

/// Outcome of a randomized search for the maximizing input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiamondSearch {
    /// Largest output trace distance found; never exceeds the diamond distance.
    pub lower_bound: f64,
    pub evaluations: usize,
}

const RESTARTS: usize = 10;

/// Lower bound on the diamond distance by direct search over pure inputs on
/// the doubled space `C^d ⊗ C^d`.
///
/// An input is a unit-Frobenius `d×d` matrix `Ψ`. Both outputs are pure, so
/// their trace distance is `2‖WΨ − zΨ‖_F` with `W = V†U` and `z = tr(Ψ†WΨ)`.
/// Random restarts followed by projected gradient descent on `|z|²`; every
/// objective evaluation counts against `evaluations`.
pub fn diamond_lower_bound(u: &CMatrix, v: &CMatrix, evaluations: usize, seed: u64) -> Result<DiamondSearch> {
    check_pair(u, v)?;
    let w = v.adjoint() * u;
    let d = w.nrows();
    let mut rng = rng_from_seed(seed);
    let mut best = 0.0f64;
    let mut used = 0;
    let per_restart = (evaluations / RESTARTS).max(1);
    while used < evaluations {
        let budget = per_restart.min(evaluations - used);
        let mut psi = ginibre(&mut rng, d, d);
        psi.unscale_mut(psi.norm());
        let (mut value, mut z, mut wpsi) = evaluate(&w, &psi);
        used += 1;
        best = best.max(value);
        let mut step = 0.5;
        let mut spent = 1;
        while spent < budget {
            // Wirtinger gradient of |z|², projected onto the tangent space of the sphere
            let mut grad = &wpsi * z.conj() + w.adjoint() * &psi * z;
            let radial = psi.dotc(&grad).re;
            grad -= &psi * c(radial);
            let mut trial = &psi - &grad * c(step);
            trial.unscale_mut(trial.norm());
            let (t_value, t_z, t_wpsi) = evaluate(&w, &trial);
            spent += 1;
            used += 1;
            best = best.max(t_value);
            if t_z.norm_sqr() < z.norm_sqr() {
                psi = trial;
                value = t_value;
                z = t_z;
                wpsi = t_wpsi;
                step *= 1.5;
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        best = best.max(value);
    }
    Ok(DiamondSearch { lower_bound: best.min(2.0), evaluations: used })
}

/// Output trace distance for input `Ψ`, together with `z` and `WΨ`.
fn evaluate(w: &CMatrix, psi: &CMatrix) -> (f64, Complex64, CMatrix) {
    let wpsi = w * psi;
    let z = psi.dotc(&wpsi);
    let residual = &wpsi - psi * z;
    (2.0 * residual.norm(), z, wpsi)
}
