//! Branching mechanisms ψ and immigration mechanisms φ.
//!
//! ψ(λ) = αλ + βλ² + ∫ (e^{−λℓ} − 1 + λℓ·1_{ℓ≤1}) π(dℓ)
//! φ(λ) = ᾱλ + ∫ (1 − e^{−λx}) ν(dx)

pub mod levy;

use serde::{Deserialize, Serialize};

pub use levy::{ExpWeight, LevyMeasure, LevyTerm, LevyTermSpec};

use crate::error::{domain, Error, Result};
use crate::numerics::roots::brent;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism<T> {
    pub alpha: T,
    pub beta: T,
    pub levy: LevyMeasure<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationMechanism<T> {
    pub alpha_bar: T,
    pub nu: LevyMeasure<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Critical,
    Subcritical,
    Supercritical,
}

impl std::fmt::Display for Criticality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criticality::Critical => "critical",
            Criticality::Subcritical => "subcritical",
            Criticality::Supercritical => "supercritical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MechanismClass {
    pub kind: Criticality,
    pub conservative: bool,
}

/// `θ₀ = sup{θ ≥ 0 : ∫_{(1,∞)} e^{θℓ} π(dℓ) < ∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaZero<T> {
    pub theta0: T,
    /// Whether θ₀ itself belongs to Θ.
    pub closed_boundary: bool,
}

impl<T: Scalar> ThetaZero<T> {
    /// `θ ∈ Θ`, where Θ is `(0, θ₀]` or `(0, θ₀)`.
    pub fn admits(&self, theta: T) -> bool {
        theta > T::zero() && (theta < self.theta0 || (theta == self.theta0 && self.closed_boundary))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub levy: Vec<LevyTermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmigrationSpec {
    #[serde(default)]
    pub alpha_bar: f64,
    #[serde(default)]
    pub levy: Vec<LevyTermSpec>,
}

impl<T: Scalar> BranchingMechanism<T> {
    pub fn new(alpha: T, beta: T, levy: LevyMeasure<T>) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidMechanism(format!("alpha must be finite, got {alpha}")));
        }
        if !(beta >= T::zero() && beta.is_finite()) {
            return Err(Error::InvalidMechanism(format!("beta must be finite and >= 0, got {beta}")));
        }
        levy.validate_branching()?;
        Ok(Self { alpha, beta, levy })
    }

    /// `ψ(u) = αu + βu²`.
    pub fn quadratic(alpha: T, beta: T) -> Self {
        Self::new(alpha, beta, LevyMeasure::zero()).expect("finite quadratic coefficients")
    }

    pub fn from_spec(spec: &MechanismSpec) -> Result<Self> {
        Self::new(T::c(spec.alpha), T::c(spec.beta), LevyMeasure::from_specs(&spec.levy))
    }

    pub fn is_quadratic(&self) -> bool {
        self.levy.is_zero()
    }

    /// ψ(λ) for λ ≥ 0.
    pub fn eval(&self, lambda: T) -> Result<T> {
        if !(lambda >= T::zero()) {
            return domain(format!("psi evaluated at negative or NaN lambda {lambda}"));
        }
        Ok(self.value(lambda))
    }

    /// ψ(λ) without the domain check. Also valid for −θ₀ < λ < 0 when the
    /// Lévy integrals converge there.
    pub fn value(&self, lambda: T) -> T {
        if lambda == T::zero() {
            return T::zero();
        }
        self.alpha * lambda + self.beta * lambda * lambda + self.levy.psi_part(lambda)
    }

    /// `ψ'(0⁺) = α − ∫_{(1,∞)} ℓ π(dℓ)`, possibly −∞.
    pub fn psi_prime_at_zero(&self) -> T {
        self.alpha - self.levy.first_moment_above_one()
    }

    pub fn classify(&self) -> MechanismClass {
        let d = self.psi_prime_at_zero();
        let scale = self.alpha.abs() + self.levy.first_moment_above_one().abs();
        let tol = T::c(1e3) * T::epsilon() * scale;
        let kind = if d == T::neg_infinity() {
            Criticality::Supercritical
        } else if d > tol {
            Criticality::Subcritical
        } else if d < -tol {
            Criticality::Supercritical
        } else {
            Criticality::Critical
        };
        // Within the family ψ'(0⁺) = −∞ only through power tails ℓ^{−1−γ}, γ ≤ 1.
        // Then ψ(u) ≍ −u^γ (γ < 1, Grey integral finite) or −u·ln(1/u) (γ = 1,
        // Grey integral diverges like ln ln).
        let conservative = d.is_finite() || self.levy.heavy_tail_index().is_some_and(|g| g >= T::one());
        MechanismClass { kind, conservative }
    }

    pub fn is_conservative(&self) -> bool {
        self.classify().conservative
    }

    /// The mechanism of `T_θ(ψ)(λ) = ψ(θ + λ) − ψ(θ)`.
    pub fn shift(&self, theta: T) -> Result<Self> {
        if theta == T::zero() {
            return Ok(self.clone());
        }
        if theta < T::zero() {
            let tz = self.theta_zero();
            if !tz.admits(-theta) {
                return domain(format!(
                    "shift by {theta} needs {} in Θ (θ₀ = {}, closed = {})",
                    -theta, tz.theta0, tz.closed_boundary
                ));
            }
        }
        let alpha = self.alpha + T::c(2.0) * self.beta * theta + self.levy.shift_correction(theta);
        let levy = self.levy.multiplied(&[ExpWeight { coef: T::one(), rate: theta }]);
        Self::new(alpha, self.beta, levy)
    }

    pub fn theta_zero(&self) -> ThetaZero<T> {
        let (theta0, closed_boundary) = self.levy.theta_zero();
        ThetaZero { theta0, closed_boundary }
    }

    /// `φ_θ(λ) = 2βθλ + ∫ (e^{θx} − 1)(1 − e^{−λx}) π(dx)`, so that
    /// `T_{−θ}(ψ) = ψ − φ_θ`.
    pub fn phi_theta(&self, theta: T) -> Result<ImmigrationMechanism<T>> {
        if !self.theta_zero().admits(theta) {
            return domain(format!("theta {theta} outside Θ"));
        }
        let w = [ExpWeight { coef: T::one(), rate: -theta }, ExpWeight { coef: -T::one(), rate: T::zero() }];
        ImmigrationMechanism::new(T::c(2.0) * self.beta * theta, self.levy.multiplied(&w))
    }

    /// `φ̃_θ(λ) = 2βθλ + ∫ (1 − e^{−θx})(1 − e^{−λx}) π(dx) = T_θ(ψ)(λ) − ψ(λ)`.
    pub fn tilde_phi_theta(&self, theta: T) -> Result<ImmigrationMechanism<T>> {
        if !(theta > T::zero()) {
            return domain(format!("theta must be positive, got {theta}"));
        }
        let w = [ExpWeight { coef: T::one(), rate: T::zero() }, ExpWeight { coef: -T::one(), rate: theta }];
        ImmigrationMechanism::new(T::c(2.0) * self.beta * theta, self.levy.multiplied(&w))
    }

    /// `ψ⁰ − φ`: drift `α⁰ − ᾱ − ∫_{(0,1]} ℓ ν(dℓ)`, same β, Lévy measure `π + ν`.
    pub fn subtract_immigration(&self, phi: &ImmigrationMechanism<T>) -> Result<Self> {
        let m1 = phi.nu.first_moment_below_one();
        if !m1.is_finite() {
            return Err(Error::InvalidMechanism("immigration measure has ∫_{(0,1]} x ν(dx) = ∞".into()));
        }
        Self::new(self.alpha - phi.alpha_bar - m1, self.beta, self.levy.sum(&phi.nu))
    }

    /// Smallest λ > 0 with ψ(λ) = 0, if ψ is negative near 0 and turns positive.
    pub fn positive_root(&self) -> Option<T> {
        if self.classify().kind != Criticality::Supercritical {
            return None;
        }
        let mut lo = T::c(1e-3);
        let mut tries = 0;
        while self.value(lo) >= T::zero() {
            lo = lo * T::c(1e-2);
            tries += 1;
            if tries > 20 {
                return None;
            }
        }
        let mut hi = lo;
        while self.value(hi) < T::zero() {
            lo = hi;
            hi = hi * T::c(2.0);
            if hi > T::c(1e15) {
                return None;
            }
        }
        brent(|x| self.value(x), lo, hi, T::epsilon() * hi, 200).ok()
    }
}

impl<T: Scalar> ImmigrationMechanism<T> {
    pub fn new(alpha_bar: T, nu: LevyMeasure<T>) -> Result<Self> {
        if !(alpha_bar >= T::zero() && alpha_bar.is_finite()) {
            return Err(Error::InvalidMechanism(format!("alpha_bar must be finite and >= 0, got {alpha_bar}")));
        }
        nu.validate_immigration()?;
        Ok(Self { alpha_bar, nu })
    }

    pub fn zero() -> Self {
        Self { alpha_bar: T::zero(), nu: LevyMeasure::zero() }
    }

    /// `φ(λ) = ᾱλ`.
    pub fn linear(alpha_bar: T) -> Self {
        Self::new(alpha_bar, LevyMeasure::zero()).expect("finite nonnegative drift")
    }

    pub fn from_spec(spec: &ImmigrationSpec) -> Result<Self> {
        Self::new(T::c(spec.alpha_bar), LevyMeasure::from_specs(&spec.levy))
    }

    pub fn is_zero(&self) -> bool {
        self.alpha_bar == T::zero() && self.nu.is_zero()
    }

    pub fn eval(&self, lambda: T) -> Result<T> {
        if !(lambda >= T::zero()) {
            return domain(format!("phi evaluated at negative or NaN lambda {lambda}"));
        }
        Ok(self.value(lambda))
    }

    pub fn value(&self, lambda: T) -> T {
        if lambda == T::zero() {
            return T::zero();
        }
        self.alpha_bar * lambda + self.nu.phi_part(lambda)
    }
}

pub fn eval_psi<T: Scalar>(m: &BranchingMechanism<T>, lambda: T) -> Result<T> {
    m.eval(lambda)
}

pub fn eval_phi<T: Scalar>(f: &ImmigrationMechanism<T>, lambda: T) -> Result<T> {
    f.eval(lambda)
}

pub fn psi_prime_at_zero<T: Scalar>(m: &BranchingMechanism<T>) -> T {
    m.psi_prime_at_zero()
}

pub fn classify<T: Scalar>(m: &BranchingMechanism<T>) -> MechanismClass {
    m.classify()
}

pub fn subtract_immigration<T: Scalar>(
    psi0: &BranchingMechanism<T>,
    phi: &ImmigrationMechanism<T>,
) -> Result<BranchingMechanism<T>> {
    psi0.subtract_immigration(phi)
}

pub fn shift<T: Scalar>(m: &BranchingMechanism<T>, theta: T) -> Result<BranchingMechanism<T>> {
    m.shift(theta)
}

pub fn theta_zero<T: Scalar>(m: &BranchingMechanism<T>) -> ThetaZero<T> {
    m.theta_zero()
}

pub fn phi_theta<T: Scalar>(m: &BranchingMechanism<T>, theta: T) -> Result<ImmigrationMechanism<T>> {
    m.phi_theta(theta)
}

pub fn tilde_phi_theta<T: Scalar>(m: &BranchingMechanism<T>, theta: T) -> Result<ImmigrationMechanism<T>> {
    m.tilde_phi_theta(theta)
}
