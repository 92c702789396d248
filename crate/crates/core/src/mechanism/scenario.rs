use crate::error::{Error, Result};
use crate::qcore::{
    basis_vector, c, derive_seed, haar_unitary, kron, outer, rng_from_seed, CMatrix, CVector,
    DensityMatrix, HilbertFactorization, Projector, STRUCTURAL_TOL,
};

/// `⟨o_θ|ρ_S|o_θ⟩` must exceed this for a run to be admissible.
pub const ADMISSIBILITY_THRESHOLD: f64 = 1e-9;

const BASIS_STREAM: u64 = 0xBA5E;

/// One measurement setting: dimensions, bases, the observed outcome `θ` and
/// the dominant environment subspace.
///
/// Outcomes are 0-based: `outcome ∈ 0..d_S` selects `|o_θ⟩` and the pointer `|a_θ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementScenario {
    fact: HilbertFactorization,
    observable_basis: Vec<CVector>,
    apparatus_ready: CVector,
    pointers: Vec<CVector>,
    outcome: usize,
    dominant_rank: usize,
    dominant_env_basis: Vec<CVector>,
    seed: u64,
}

impl MeasurementScenario {
    /// Scenario with computational bases: `|o_i⟩ = |i⟩`, `|a_0⟩ = |0⟩`,
    /// `|a_i⟩ = |i + 1⟩`, `|e_k⟩ = |k⟩`.
    pub fn new(fact: HilbertFactorization, outcome: usize, dominant_rank: usize, seed: u64) -> Result<Self> {
        let observable_basis = (0..fact.system).map(|i| basis_vector(fact.system, i)).collect();
        let apparatus_ready = basis_vector(fact.apparatus, 0);
        let pointers = (0..fact.system).map(|i| basis_vector(fact.apparatus, i + 1)).collect();
        let dominant_env_basis =
            (0..dominant_rank.min(fact.environment)).map(|k| basis_vector(fact.environment, k)).collect();
        let sc = Self {
            fact,
            observable_basis,
            apparatus_ready,
            pointers,
            outcome,
            dominant_rank,
            dominant_env_basis,
            seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Scenario whose observable, apparatus and dominant environment bases are
    /// drawn from Haar-random unitaries (seeded by `seed`).
    pub fn randomized(fact: HilbertFactorization, outcome: usize, dominant_rank: usize, seed: u64) -> Result<Self> {
        let mut sc = Self::new(fact, outcome, dominant_rank, seed)?;
        let mut rng = rng_from_seed(derive_seed(seed, &[BASIS_STREAM]));
        let us = haar_unitary(&mut rng, fact.system);
        let ua = haar_unitary(&mut rng, fact.apparatus);
        let ue = haar_unitary(&mut rng, fact.environment);
        sc.observable_basis = (0..fact.system).map(|i| us.column(i).into_owned()).collect();
        sc.apparatus_ready = ua.column(0).into_owned();
        sc.pointers = (0..fact.system).map(|i| ua.column(i + 1).into_owned()).collect();
        sc.dominant_env_basis = (0..dominant_rank).map(|k| ue.column(k).into_owned()).collect();
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_observable_basis(mut self, basis: Vec<CVector>) -> Result<Self> {
        self.observable_basis = basis;
        self.validate()?;
        Ok(self)
    }

    pub fn with_apparatus(mut self, ready: CVector, pointers: Vec<CVector>) -> Result<Self> {
        self.apparatus_ready = ready;
        self.pointers = pointers;
        self.validate()?;
        Ok(self)
    }

    /// Fixes the dominant subspace to an explicit orthonormal environment basis.
    pub fn with_dominant_basis(mut self, basis: Vec<CVector>) -> Result<Self> {
        self.dominant_rank = basis.len();
        self.dominant_env_basis = basis;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        let f = &self.fact;
        if f.apparatus < f.system + 1 {
            return Err(Error::InvalidScenario("apparatus needs d_S + 1 orthonormal states".into()));
        }
        if self.outcome >= f.system {
            return Err(Error::InvalidScenario(format!(
                "outcome {} out of range 0..{}",
                self.outcome, f.system
            )));
        }
        if self.dominant_rank == 0 {
            return Err(Error::InvalidScenario("dominant rank must be positive".into()));
        }
        if f.system * self.dominant_rank > f.environment {
            return Err(Error::InfeasibleConstruction {
                required: f.system * self.dominant_rank,
                available: f.environment,
            });
        }
        check_family("observable basis", &self.observable_basis, f.system, f.system)?;
        let mut apparatus = vec![self.apparatus_ready.clone()];
        apparatus.extend(self.pointers.iter().cloned());
        check_family("apparatus states", &apparatus, f.apparatus, f.system + 1)?;
        check_family("dominant environment basis", &self.dominant_env_basis, f.environment, self.dominant_rank)
    }

    pub fn factorization(&self) -> &HilbertFactorization {
        &self.fact
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn dominant_rank(&self) -> usize {
        self.dominant_rank
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn observable(&self, i: usize) -> &CVector {
        &self.observable_basis[i]
    }

    pub fn observable_basis(&self) -> &[CVector] {
        &self.observable_basis
    }

    pub fn apparatus_ready(&self) -> &CVector {
        &self.apparatus_ready
    }

    pub fn pointer(&self, i: usize) -> &CVector {
        &self.pointers[i]
    }

    pub fn pointers(&self) -> &[CVector] {
        &self.pointers
    }

    pub fn dominant_env_basis(&self) -> &[CVector] {
        &self.dominant_env_basis
    }

    /// `|o_i⟩ ⊗ |a_0⟩ ⊗ |e_k⟩`
    pub fn dominant_input(&self, i: usize, k: usize) -> CVector {
        self.observable_basis[i]
            .kronecker(&self.apparatus_ready)
            .kronecker(&self.dominant_env_basis[k])
    }

    /// Isometry `I_S ⊗ |a_0⟩ ⊗ I_E` from `S ⊗ E` into the joint space.
    pub fn ready_embedding(&self) -> CMatrix {
        let f = &self.fact;
        let a0 = CMatrix::from_column_slice(f.apparatus, 1, self.apparatus_ready.as_slice());
        kron(&kron(&CMatrix::identity(f.system, f.system), &a0), &CMatrix::identity(f.environment, f.environment))
    }

    /// `|o_θ⟩|a_θ⟩`, a vector on `S ⊗ A`.
    pub fn outcome_sa_vector(&self) -> CVector {
        self.observable_basis[self.outcome].kronecker(&self.pointers[self.outcome])
    }

    /// `Π_SA^(θ) ⊗ I_E` on the joint space.
    pub fn outcome_projector_sae(&self) -> Projector {
        let v = self.outcome_sa_vector();
        let e = self.fact.environment;
        let m = kron(&outer(&v, &v), &CMatrix::identity(e, e));
        Projector::new(m).expect("outer product of a unit vector is a projector")
    }

    /// `Π_S^(θ) ⊗ I_E` on `S ⊗ E`.
    pub fn system_projector_se(&self) -> Projector {
        let o = &self.observable_basis[self.outcome];
        let e = self.fact.environment;
        let m = kron(&outer(o, o), &CMatrix::identity(e, e));
        Projector::new(m).expect("outer product of a unit vector is a projector")
    }

    /// `Π_D` on the environment.
    pub fn dominant_projector(&self) -> Projector {
        Projector::from_orthonormal(&self.dominant_env_basis, self.fact.environment)
            .expect("validated orthonormal family")
    }

    /// Returns `⟨o_θ|ρ_S|o_θ⟩`, or an error if it does not exceed the threshold.
    pub fn admissibility(&self, rho_s: &DensityMatrix) -> Result<f64> {
        if rho_s.dim() != self.fact.system {
            return Err(Error::DimensionMismatch { expected: self.fact.system, found: rho_s.dim() });
        }
        let w = rho_s.expectation(&self.observable_basis[self.outcome]);
        if w > ADMISSIBILITY_THRESHOLD {
            Ok(w)
        } else {
            Err(Error::Inadmissible(w))
        }
    }

    /// Embeds a `D×D` operator into the environment through the dominant basis.
    pub fn embed_dominant(&self, rho_d: &CMatrix) -> Result<CMatrix> {
        if rho_d.nrows() != self.dominant_rank || rho_d.ncols() != self.dominant_rank {
            return Err(Error::DimensionMismatch { expected: self.dominant_rank, found: rho_d.nrows() });
        }
        let basis = CMatrix::from_columns(&self.dominant_env_basis);
        Ok(&basis * rho_d * basis.adjoint())
    }
}

fn check_family(name: &str, family: &[CVector], dim: usize, count: usize) -> Result<()> {
    if family.len() != count {
        return Err(Error::InvalidScenario(format!("{name}: expected {count} vectors, found {}", family.len())));
    }
    for (i, u) in family.iter().enumerate() {
        if u.len() != dim {
            return Err(Error::InvalidScenario(format!("{name}: vector {i} has dimension {}", u.len())));
        }
        for (j, v) in family.iter().enumerate().take(i + 1) {
            let expect = if i == j { c(1.0) } else { c(0.0) };
            if (u.dotc(v) - expect).norm() > STRUCTURAL_TOL {
                return Err(Error::InvalidScenario(format!("{name} is not orthonormal")));
            }
        }
    }
    Ok(())
}
