use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{c, CMatrix, DensityMatrix, PureState, Space};
use crate::error::{Error, Result};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream of indices into an independent seed
/// (SplitMix64 finalizer applied per component).
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    let mut state = base;
    for &s in stream {
        state = splitmix(state ^ splitmix(s.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    splitmix(state)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let qr = ginibre(rng, dim, dim).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0) };
        q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    q
}

/// Density matrix from the induced measure: trace out a `rank`-dimensional
/// ancilla from a random pure state on `dim × rank`.
pub fn state_from_rng<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> Result<DensityMatrix> {
    if rank == 0 || rank > dim {
        return Err(Error::RankOutOfRange { rank, dim });
    }
    let g = ginibre(rng, dim, rank);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    Ok(DensityMatrix::from_evolved(m * c(1.0 / tr), Space::anonymous(dim)))
}

pub fn sample_state(dim: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    state_from_rng(&mut rng_from_seed(seed), dim, rank)
}

pub fn sample_unitary(dim: usize, seed: u64) -> Result<CMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("unitary dimension must be positive".into()));
    }
    Ok(haar_unitary(&mut rng_from_seed(seed), dim))
}

pub fn sample_pure(dim: usize, seed: u64) -> Result<PureState> {
    if dim == 0 {
        return Err(Error::InvalidParameter("state dimension must be positive".into()));
    }
    let g = ginibre(&mut rng_from_seed(seed), dim, 1);
    PureState::normalized(g.column(0).into_owned(), Space::anonymous(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{max_abs, unitary_deviation};

    #[test]
    fn rank_one_is_pure() {
        let rho = sample_state(4, 1, 11).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_state(3, 2, 5).unwrap(), sample_state(3, 2, 5).unwrap());
        assert_eq!(sample_unitary(4, 5).unwrap(), sample_unitary(4, 5).unwrap());
        assert_eq!(sample_pure(4, 5).unwrap(), sample_pure(4, 5).unwrap());
        assert_ne!(sample_unitary(4, 5).unwrap(), sample_unitary(4, 6).unwrap());
    }

    #[test]
    fn sampled_unitaries_are_unitary() {
        for seed in 0..20 {
            let u = sample_unitary(1 + (seed as usize % 9), seed).unwrap();
            assert!(unitary_deviation(&u) < 1e-10);
        }
    }

    #[test]
    fn rank_out_of_range() {
        assert!(matches!(sample_state(3, 0, 1), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(sample_state(3, 4, 1), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn sampled_states_are_valid() {
        for seed in 0..10 {
            let rho = sample_state(5, 1 + seed as usize % 5, seed).unwrap();
            let (herm, tr, min) = rho.invariant_report();
            assert!(herm < 1e-12 && tr < 1e-10 && min > -1e-10);
        }
    }

    // Left-invariance of the Haar measure: |U_00|^2 and |(VU)_00|^2 share the
    // Beta(1, d-1) law with mean 1/d and variance (d-1)/(d^2 (d+1)).
    #[test]
    fn haar_statistics_are_left_invariant() {
        let d = 3;
        let n = 4000;
        let fixed = sample_unitary(d, 999).unwrap();
        let mut rng = rng_from_seed(17);
        let (mut plain, mut rotated) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let u = haar_unitary(&mut rng, d);
            plain.push(u[(0, 0)].norm_sqr());
            rotated.push((&fixed * &u)[(0, 0)].norm_sqr());
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let expected_mean = 1.0 / d as f64;
        let sd = ((d as f64 - 1.0) / ((d * d) as f64 * (d as f64 + 1.0))).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((mean(&plain) - expected_mean).abs() < 5.0 * se);
        assert!((mean(&rotated) - expected_mean).abs() < 5.0 * se);
        assert!(max_abs(&(fixed.adjoint() * &fixed - CMatrix::identity(d, d))) < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 1]);
        let b = derive_seed(1, &[1, 0]);
        let c = derive_seed(2, &[0, 1]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[0, 1]));
    }
}
