use std::fmt;

use crate::error::{Error, Result};

/// One tensor factor of the joint space, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    System,
    Apparatus,
    Environment,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::System, Factor::Apparatus, Factor::Environment];

    pub fn symbol(self) -> &'static str {
        match self {
            Factor::System => "S",
            Factor::Apparatus => "A",
            Factor::Environment => "E",
        }
    }
}

/// Dimensions of the system, apparatus and environment factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertFactorization {
    pub system: usize,
    pub apparatus: usize,
    pub environment: usize,
}

impl HilbertFactorization {
    /// Factorization for a measurement model: the apparatus needs a ready
    /// state plus one pointer per outcome, so `d_A >= d_S + 1`.
    pub fn new(system: usize, apparatus: usize, environment: usize) -> Result<Self> {
        let fact = Self::bare(system, apparatus, environment)?;
        if apparatus < system + 1 {
            return Err(Error::InvalidFactorization(format!(
                "apparatus dimension {apparatus} cannot hold a ready state and {system} pointers"
            )));
        }
        Ok(fact)
    }

    /// Factorization used only for tensor bookkeeping; no apparatus requirement.
    pub fn bare(system: usize, apparatus: usize, environment: usize) -> Result<Self> {
        if system == 0 || apparatus == 0 || environment == 0 {
            return Err(Error::InvalidFactorization(
                "all factor dimensions must be positive".into(),
            ));
        }
        Ok(Self { system, apparatus, environment })
    }

    pub fn dim(&self) -> usize {
        self.system * self.apparatus * self.environment
    }

    pub fn factor_dim(&self, factor: Factor) -> usize {
        match factor {
            Factor::System => self.system,
            Factor::Apparatus => self.apparatus,
            Factor::Environment => self.environment,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.system, self.apparatus, self.environment]
    }

    /// Flat index of `|s⟩|a⟩|e⟩`. S varies slowest, E fastest.
    #[inline]
    pub fn flat_index(&self, s: usize, a: usize, e: usize) -> usize {
        debug_assert!(s < self.system && a < self.apparatus && e < self.environment);
        (s * self.apparatus + a) * self.environment + e
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    #[inline]
    pub fn split_index(&self, flat: usize) -> (usize, usize, usize) {
        let e = flat % self.environment;
        let rest = flat / self.environment;
        (rest / self.apparatus, rest % self.apparatus, e)
    }

    /// Tagged space of the full joint `S ⊗ A ⊗ E`.
    pub fn joint(&self) -> Space {
        self.space_of(&Factor::ALL)
    }

    /// Tagged space of a subset of factors (kept in canonical order).
    pub fn space_of(&self, factors: &[Factor]) -> Space {
        let mut fs: Vec<Factor> = factors.to_vec();
        fs.sort();
        fs.dedup();
        Space::from_factors(fs.into_iter().map(|f| (f, self.factor_dim(f))).collect())
    }
}

/// Dimension tag carried by states and operators.
///
/// A space is either anonymous (just a dimension) or a canonical-order product
/// of named factors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Space {
    factors: Vec<(Factor, usize)>,
    dim: usize,
}

impl Space {
    pub fn anonymous(dim: usize) -> Self {
        Self { factors: Vec::new(), dim }
    }

    pub fn factor(factor: Factor, dim: usize) -> Self {
        Self { factors: vec![(factor, dim)], dim }
    }

    fn from_factors(factors: Vec<(Factor, usize)>) -> Self {
        let dim = factors.iter().map(|(_, d)| d).product();
        Self { factors, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[(Factor, usize)] {
        &self.factors
    }

    pub fn is_anonymous(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn contains(&self, factor: Factor) -> bool {
        self.factors.iter().any(|(f, _)| *f == factor)
    }

    /// Tag of `self ⊗ other`. Named factors must compose in `S, A, E` order.
    pub fn tensor(&self, other: &Space) -> Result<Space> {
        if self.is_anonymous() || other.is_anonymous() {
            return Ok(Space::anonymous(self.dim * other.dim));
        }
        let last = self.factors.last().map(|(f, _)| *f);
        let first = other.factors.first().map(|(f, _)| *f);
        if let (Some(l), Some(f)) = (last, first) {
            if l >= f {
                return Err(Error::FactorOrder(format!(
                    "{self} ⊗ {other} breaks the S ⊗ A ⊗ E ordering"
                )));
            }
        }
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Ok(Space::from_factors(factors))
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_anonymous() {
            return write!(f, "C^{}", self.dim);
        }
        let parts: Vec<String> =
            self.factors.iter().map(|(fac, d)| format!("{}({d})", fac.symbol())).collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_is_bijective() {
        let fact = HilbertFactorization::new(3, 4, 5).unwrap();
        let mut seen = vec![false; fact.dim()];
        for s in 0..3 {
            for a in 0..4 {
                for e in 0..5 {
                    let i = fact.flat_index(s, a, e);
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(fact.split_index(i), (s, a, e));
                }
            }
        }
        assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn apparatus_must_hold_pointers() {
        assert!(HilbertFactorization::new(2, 2, 4).is_err());
        assert!(HilbertFactorization::new(2, 3, 4).is_ok());
        assert!(HilbertFactorization::bare(2, 1, 2).is_ok());
        assert!(HilbertFactorization::bare(0, 1, 2).is_err());
    }

    #[test]
    fn tensor_order_is_enforced() {
        let s = Space::factor(Factor::System, 2);
        let e = Space::factor(Factor::Environment, 3);
        assert_eq!(s.tensor(&e).unwrap().dim(), 6);
        assert!(matches!(e.tensor(&s), Err(Error::FactorOrder(_))));
        assert!(matches!(s.tensor(&s), Err(Error::FactorOrder(_))));
        assert!(Space::anonymous(2).tensor(&s).unwrap().is_anonymous());
    }
}
