use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A finite measure on ℝ with support bounded above: atoms plus piecewise
/// constant densities.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasureOnR<T> {
    atoms: Vec<(T, T)>,
    densities: Vec<(T, T, T)>,
}

impl<T: Scalar> FiniteMeasureOnR<T> {
    /// `atoms`: (location, mass > 0); `densities`: (a, b, rate ≥ 0) on [a, b).
    pub fn new(atoms: Vec<(T, T)>, densities: Vec<(T, T, T)>) -> Result<Self> {
        for &(s, m) in &atoms {
            if !s.is_finite() {
                return Err(Error::Domain(format!("atom at {s}: support must be bounded")));
            }
            if !(m > T::zero() && m.is_finite()) {
                return Err(Error::Domain(format!("atom mass must be positive and finite, got {m}")));
            }
        }
        for &(a, b, r) in &densities {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Domain(format!("density on [{a}, {b}): support must be bounded")));
            }
            if !(a < b) || !(r >= T::zero() && r.is_finite()) {
                return Err(Error::Domain(format!("density needs a < b and rate >= 0, got [{a}, {b}) rate {r}")));
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite"));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (s, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 = last.1 + m,
                _ => merged.push((s, m)),
            }
        }
        let densities = densities.into_iter().filter(|d| d.2 > T::zero()).collect();
        Ok(Self { atoms: merged, densities })
    }

    pub fn zero() -> Self {
        Self { atoms: Vec::new(), densities: Vec::new() }
    }

    /// `λ·δ_t`; the zero measure when λ = 0.
    pub fn dirac(t: T, lambda: T) -> Result<Self> {
        if lambda == T::zero() {
            return Ok(Self::zero());
        }
        Self::new(vec![(t, lambda)], vec![])
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn densities(&self) -> &[(T, T, T)] {
        &self.densities
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.densities.is_empty()
    }

    /// Supremum of the support; −∞ for the zero measure.
    pub fn h(&self) -> T {
        let a = self.atoms.iter().fold(T::neg_infinity(), |m, x| m.max(x.0));
        self.densities.iter().fold(a, |m, d| m.max(d.1))
    }

    pub fn has_top_atom(&self) -> bool {
        let h = self.h();
        self.atoms.iter().any(|a| a.0 == h)
    }

    pub fn total_mass(&self) -> T {
        let a = self.atoms.iter().fold(T::zero(), |acc, x| acc + x.1);
        self.densities.iter().fold(a, |acc, d| acc + (d.1 - d.0) * d.2)
    }

    /// `μ([s, ∞))`.
    pub fn mass_from(&self, s: T) -> T {
        let a = self.atoms.iter().filter(|x| x.0 >= s).fold(T::zero(), |acc, x| acc + x.1);
        self.densities.iter().fold(a, |acc, &(lo, hi, r)| acc + (hi - lo.max(s)).max(T::zero()) * r)
    }

    pub fn density_at(&self, s: T) -> T {
        self.densities.iter().filter(|d| d.0 <= s && s < d.1).fold(T::zero(), |acc, d| acc + d.2)
    }

    pub fn atom_at(&self, s: T) -> T {
        self.atoms.iter().filter(|x| x.0 == s).fold(T::zero(), |acc, x| acc + x.1)
    }

    /// Atom locations and density endpoints.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut v: Vec<T> = self.atoms.iter().map(|a| a.0).collect();
        for d in &self.densities {
            v.push(d.0);
            v.push(d.1);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_and_mass() {
        let m = FiniteMeasureOnR::new(vec![(1.0, 2.0), (0.5, 1.0), (1.0, 0.5)], vec![(0.0, 2.0, 0.25)]).unwrap();
        assert_eq!(m.h(), 2.0);
        assert!(!m.has_top_atom());
        assert_eq!(m.atoms(), &[(0.5, 1.0), (1.0, 2.5)]);
        assert_eq!(m.total_mass(), 4.0);
        assert_eq!(m.mass_from(1.0), 2.5 + 0.25);
        assert_eq!(m.density_at(1.5), 0.25);
        let top = FiniteMeasureOnR::dirac(3.0, 1.0).unwrap();
        assert!(top.has_top_atom());
        assert_eq!(FiniteMeasureOnR::<f64>::zero().h(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_unbounded_or_negative() {
        assert!(FiniteMeasureOnR::new(vec![(f64::INFINITY, 1.0)], vec![]).is_err());
        assert!(FiniteMeasureOnR::new(vec![], vec![(0.0, f64::INFINITY, 1.0)]).is_err());
        assert!(FiniteMeasureOnR::new(vec![(0.0, -1.0)], vec![]).is_err());
    }
}
