//! Lévy measures on (0, ∞) drawn from a closed parametric family.
//!
//! Every term is a base measure (atom, exponential density, power density on
//! (0, ∞) or on (1, ∞)) optionally multiplied by a finite exponential sum
//! `W(ℓ) = Σ coef·e^{−rate·ℓ}`. Tilting by `e^{−θℓ}`, `e^{θℓ} − 1` and
//! `1 − e^{−θℓ}` keeps a measure inside the family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quadrature::{
    integrate, integrate_exp_tail, integrate_power_at_zero, integrate_power_tail, QuadOptions,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpWeight<T> {
    pub coef: T,
    pub rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevyTerm<T> {
    /// `mass·δ_location`.
    Atom { location: T, mass: T },
    /// `c·e^{−ρℓ}dℓ` on (0, ∞). `c` may be negative inside derived sums.
    Exp { c: T, rho: T },
    /// `c·ℓ^{−1−γ}·W(ℓ)dℓ` on (0, ∞).
    Stable { c: T, gamma: T, tilt: Vec<ExpWeight<T>> },
    /// `c·ℓ^{−1−γ}·W(ℓ)dℓ` on (1, ∞).
    Tail { c: T, gamma: T, tilt: Vec<ExpWeight<T>> },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevyMeasure<T> {
    pub terms: Vec<LevyTerm<T>>,
}

/// Config form of one Lévy term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LevyTermSpec {
    Atom { location: f64, mass: f64 },
    Exp { c: f64, rho: f64 },
    Stable { c: f64, gamma: f64 },
    Tail { c: f64, gamma: f64 },
}

fn unit_tilt<T: Scalar>() -> Vec<ExpWeight<T>> {
    vec![ExpWeight { coef: T::one(), rate: T::zero() }]
}

fn is_unit_tilt<T: Scalar>(w: &[ExpWeight<T>]) -> bool {
    w.len() == 1 && w[0].coef == T::one() && w[0].rate == T::zero()
}

fn weight_at<T: Scalar>(w: &[ExpWeight<T>], l: T) -> T {
    w.iter().fold(T::zero(), |acc, e| acc + e.coef * (-e.rate * l).exp())
}

fn weight_scale<T: Scalar>(w: &[ExpWeight<T>]) -> T {
    w.iter().fold(T::zero(), |acc, e| acc + e.coef.abs())
}

/// `W(0) = 0` up to rounding: the density loses one power of ℓ at the origin.
fn vanishes_at_zero<T: Scalar>(w: &[ExpWeight<T>]) -> bool {
    weight_at(w, T::zero()).abs() <= T::c(1e3) * T::epsilon() * weight_scale(w)
}

fn min_rate<T: Scalar>(w: &[ExpWeight<T>]) -> T {
    w.iter().filter(|e| e.coef != T::zero()).fold(T::infinity(), |m, e| m.min(e.rate))
}

/// Coefficient of the slowest exponential in `W`, i.e. the large-ℓ behaviour.
fn leading_coef<T: Scalar>(w: &[ExpWeight<T>]) -> T {
    let r = min_rate(w);
    w.iter().filter(|e| e.rate == r).fold(T::zero(), |acc, e| acc + e.coef)
}

fn multiply_weights<T: Scalar>(a: &[ExpWeight<T>], b: &[ExpWeight<T>]) -> Vec<ExpWeight<T>> {
    let mut out: Vec<ExpWeight<T>> = Vec::new();
    for x in a {
        for y in b {
            let rate = x.rate + y.rate;
            let coef = x.coef * y.coef;
            match out.iter_mut().find(|e| e.rate == rate) {
                Some(e) => e.coef = e.coef + coef,
                None => out.push(ExpWeight { coef, rate }),
            }
        }
    }
    out.retain(|e| e.coef != T::zero());
    out
}

/// `e^{−z} − 1 + z` without cancellation.
pub(crate) fn em1pl<T: Scalar>(z: T) -> T {
    if z.abs() < T::c(0.5) {
        let mut term = z * z / T::c(2.0);
        let mut sum = term;
        for n in 3..30 {
            term = -term * z / T::c(n as f64);
            sum = sum + term;
            if term.abs() <= T::epsilon() * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (-z).exp_m1() + z
    }
}

/// `∫₀¹ ℓ e^{−κℓ} dℓ`.
pub(crate) fn first_moment_unit<T: Scalar>(k: T) -> T {
    if k.abs() < T::c(0.5) {
        // Σ (−κ)ⁿ / (n!(n+2))
        let mut pow = T::one();
        let mut sum = T::zero();
        for n in 0..40 {
            let term = pow / T::c((n + 2) as f64);
            sum = sum + term;
            if term.abs() <= T::epsilon() * sum.abs() {
                break;
            }
            pow = -pow * k / T::c((n + 1) as f64);
        }
        sum
    } else {
        (T::one() - (-k).exp() * (T::one() + k)) / (k * k)
    }
}

fn gamma_f64(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Γ(−γ) for γ ∈ (0,1) ∪ (1,2).
fn gamma_neg<T: Scalar>(g: T) -> T {
    let g = g.f64();
    T::c(gamma_f64(2.0 - g) / (g * (g - 1.0)))
}

fn quad_opts<T: Scalar>() -> QuadOptions<T> {
    QuadOptions::default().with_abs_tol(T::c(1e-12).max(T::tol_floor()))
}

/// `∫₁^∞ ℓ^{−p}·e^{−rℓ}·g(ℓ) dℓ` where `g` is bounded; `p > 1` if `r = 0`.
fn tail_integral<T: Scalar, F: FnMut(T) -> T>(mut g: F, p: T, r: T) -> T {
    let opts = quad_opts();
    if r > T::zero() {
        integrate_exp_tail(|l: T| l.powf(-p) * (-r * l).exp() * g(l), T::one(), r, &opts).value
    } else {
        integrate_power_tail(|l: T| l.powf(-p) * (-r * l).exp() * g(l), T::one(), p - T::one(), &opts).value
    }
}

impl<T: Scalar> LevyTerm<T> {
    pub fn from_spec(spec: &LevyTermSpec) -> Self {
        match *spec {
            LevyTermSpec::Atom { location, mass } => LevyTerm::Atom { location: T::c(location), mass: T::c(mass) },
            LevyTermSpec::Exp { c, rho } => LevyTerm::Exp { c: T::c(c), rho: T::c(rho) },
            LevyTermSpec::Stable { c, gamma } => LevyTerm::Stable { c: T::c(c), gamma: T::c(gamma), tilt: unit_tilt() },
            LevyTermSpec::Tail { c, gamma } => LevyTerm::Tail { c: T::c(c), gamma: T::c(gamma), tilt: unit_tilt() },
        }
    }

    pub fn stable(c: T, gamma: T) -> Self {
        LevyTerm::Stable { c, gamma, tilt: unit_tilt() }
    }

    pub fn tail(c: T, gamma: T) -> Self {
        LevyTerm::Tail { c, gamma, tilt: unit_tilt() }
    }

    fn check_common(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMechanism(m));
        match self {
            LevyTerm::Atom { location, mass } => {
                if !(*location > T::zero() && location.is_finite()) || !(*mass > T::zero() && mass.is_finite()) {
                    return bad(format!("atom needs location > 0 and mass > 0, got ({location}, {mass})"));
                }
            }
            LevyTerm::Exp { c, rho } => {
                if !(*rho > T::zero() && rho.is_finite()) || !c.is_finite() || *c == T::zero() {
                    return bad(format!("exponential density needs rho > 0 and c != 0, got ({c}, {rho})"));
                }
            }
            LevyTerm::Stable { c, gamma, tilt } | LevyTerm::Tail { c, gamma, tilt } => {
                if !(*c > T::zero() && c.is_finite()) || !(*gamma > T::zero() && gamma.is_finite()) {
                    return bad(format!("power density needs c > 0 and gamma > 0, got ({c}, {gamma})"));
                }
                if tilt.is_empty() || tilt.iter().any(|w| !(w.rate >= T::zero()) || !w.coef.is_finite()) {
                    return bad("power density tilts must have nonnegative rates".into());
                }
            }
        }
        Ok(())
    }

    /// Checks `∫(1∧ℓ²)π < ∞` for a branching Lévy measure.
    pub fn validate_branching(&self) -> Result<()> {
        self.check_common()?;
        if let LevyTerm::Stable { gamma, .. } = self {
            if !(*gamma < T::c(2.0)) || *gamma == T::one() {
                return Err(Error::InvalidMechanism(format!("stable index must lie in (0,1)∪(1,2), got {gamma}")));
            }
        }
        Ok(())
    }

    /// Checks `∫(1∧x)ν < ∞` for an immigration Lévy measure.
    pub fn validate_immigration(&self) -> Result<()> {
        self.check_common()?;
        if let LevyTerm::Stable { gamma, tilt, .. } = self {
            let limit = if vanishes_at_zero(tilt) { T::c(2.0) } else { T::one() };
            if !(*gamma < limit) || *gamma == T::one() {
                return Err(Error::InvalidMechanism(format!(
                    "stable immigration index {gamma} violates the integrability bound {limit}"
                )));
            }
        }
        Ok(())
    }

    /// `∫ (e^{−λℓ} − 1 + λℓ·1_{ℓ≤1}) π(dℓ)` for this term.
    pub fn psi_part(&self, lambda: T) -> T {
        match self {
            LevyTerm::Atom { location: l, mass } => {
                if *l <= T::one() {
                    *mass * em1pl(lambda * *l)
                } else {
                    *mass * (-lambda * *l).exp_m1()
                }
            }
            LevyTerm::Exp { c, rho } => *c * lambda * (first_moment_unit(*rho) - T::one() / (*rho * (*rho + lambda))),
            LevyTerm::Stable { c, gamma, tilt } => {
                if is_unit_tilt(tilt) && lambda >= T::zero() {
                    *c * (gamma_neg(*gamma) * lambda.powf(*gamma) + lambda / (T::one() - *gamma))
                } else {
                    let g = *gamma;
                    let near = integrate_power_at_zero(
                        |l: T| em1pl(lambda * l) * l.powf(-T::one() - g) * weight_at(tilt, l),
                        T::one(),
                        T::one() - g,
                        &quad_opts(),
                    )
                    .value;
                    *c * (near + power_tail_exp_m1(lambda, g, tilt))
                }
            }
            LevyTerm::Tail { c, gamma, tilt } => *c * power_tail_exp_m1(lambda, *gamma, tilt),
        }
    }

    /// `∫ (1 − e^{−λx}) ν(dx)` for this term.
    pub fn phi_part(&self, lambda: T) -> T {
        match self {
            LevyTerm::Atom { location, mass } => -*mass * (-lambda * *location).exp_m1(),
            LevyTerm::Exp { c, rho } => *c * lambda / (*rho * (*rho + lambda)),
            LevyTerm::Stable { c, gamma, tilt } => {
                let g = *gamma;
                if is_unit_tilt(tilt) && lambda >= T::zero() {
                    // Γ(1−γ)/γ · λ^γ
                    *c * T::c(gamma_f64(1.0 - g.f64()) / g.f64()) * lambda.powf(g)
                } else {
                    let e = if vanishes_at_zero(tilt) { T::one() - g } else { -g };
                    let near = integrate_power_at_zero(
                        |l: T| -(-lambda * l).exp_m1() * l.powf(-T::one() - g) * weight_at(tilt, l),
                        T::one(),
                        e,
                        &quad_opts(),
                    )
                    .value;
                    *c * (near - power_tail_exp_m1(lambda, g, tilt))
                }
            }
            LevyTerm::Tail { c, gamma, tilt } => -*c * power_tail_exp_m1(lambda, *gamma, tilt),
        }
    }

    /// `∫_{(1,∞)} ℓ π(dℓ)`, possibly +∞.
    pub fn first_moment_above_one(&self) -> T {
        match self {
            LevyTerm::Atom { location, mass } => {
                if *location > T::one() {
                    *mass * *location
                } else {
                    T::zero()
                }
            }
            // ∫₁^∞ ℓ e^{−ρℓ} = e^{−ρ}(1+ρ)/ρ²
            LevyTerm::Exp { c, rho } => *c * (-*rho).exp() * (T::one() + *rho) / (*rho * *rho),
            LevyTerm::Stable { c, gamma, tilt } | LevyTerm::Tail { c, gamma, tilt } => {
                let g = *gamma;
                let mut total = T::zero();
                for w in tilt {
                    let part = if w.rate == T::zero() {
                        if g <= T::one() {
                            if w.coef > T::zero() {
                                return T::infinity();
                            }
                            continue;
                        }
                        T::one() / (g - T::one())
                    } else {
                        tail_integral(|_| T::one(), g, w.rate)
                    };
                    total = total + w.coef * part;
                }
                *c * total
            }
        }
    }

    /// `∫_{(0,1]} ℓ ν(dℓ)`; finite for valid immigration terms.
    pub fn first_moment_below_one(&self) -> T {
        match self {
            LevyTerm::Atom { location, mass } => {
                if *location <= T::one() {
                    *mass * *location
                } else {
                    T::zero()
                }
            }
            LevyTerm::Exp { c, rho } => *c * first_moment_unit(*rho),
            LevyTerm::Stable { c, gamma, tilt } => {
                let g = *gamma;
                if is_unit_tilt(tilt) {
                    if g < T::one() {
                        *c / (T::one() - g)
                    } else {
                        T::infinity()
                    }
                } else {
                    let e = if vanishes_at_zero(tilt) { T::one() - g } else { -g };
                    if e <= -T::one() {
                        return T::infinity();
                    }
                    *c * integrate_power_at_zero(|l: T| l.powf(-g) * weight_at(tilt, l), T::one(), e, &quad_opts())
                        .value
                }
            }
            LevyTerm::Tail { .. } => T::zero(),
        }
    }

    /// `∫_{(0,1]} ℓ(1 − e^{−θℓ}) π(dℓ)`, the drift correction of a shift.
    pub fn shift_correction(&self, theta: T) -> T {
        match self {
            LevyTerm::Atom { location: l, mass } => {
                if *l <= T::one() {
                    -*mass * *l * (-theta * *l).exp_m1()
                } else {
                    T::zero()
                }
            }
            LevyTerm::Exp { c, rho } => *c * (first_moment_unit(*rho) - first_moment_unit(*rho + theta)),
            LevyTerm::Stable { c, gamma, tilt } => {
                let g = *gamma;
                *c * integrate_power_at_zero(
                    |l: T| -(-theta * l).exp_m1() * l.powf(-g) * weight_at(tilt, l),
                    T::one(),
                    T::one() - g,
                    &quad_opts(),
                )
                .value
            }
            LevyTerm::Tail { .. } => T::zero(),
        }
    }

    /// Exponential-moment threshold of the term and whether it is attained.
    pub fn theta_zero(&self) -> (T, bool) {
        match self {
            LevyTerm::Atom { .. } => (T::infinity(), true),
            LevyTerm::Exp { rho, .. } => (*rho, false),
            LevyTerm::Stable { tilt, .. } | LevyTerm::Tail { tilt, .. } => {
                let r = min_rate(tilt);
                // the leftover ℓ^{−1−γ} is integrable at ∞
                (r, leading_coef(tilt) >= T::zero())
            }
        }
    }

    /// The term multiplied by `Σ coef·e^{−rate·ℓ}`.
    fn multiplied(&self, w: &[ExpWeight<T>]) -> Vec<LevyTerm<T>> {
        match self {
            LevyTerm::Atom { location, mass } => {
                let m = *mass * weight_at(w, *location);
                if m == T::zero() {
                    vec![]
                } else {
                    vec![LevyTerm::Atom { location: *location, mass: m }]
                }
            }
            LevyTerm::Exp { c, rho } => w
                .iter()
                .map(|e| LevyTerm::Exp { c: *c * e.coef, rho: *rho + e.rate })
                .filter(|t| !matches!(t, LevyTerm::Exp { c, .. } if *c == T::zero()))
                .collect(),
            LevyTerm::Stable { c, gamma, tilt } => {
                vec![LevyTerm::Stable { c: *c, gamma: *gamma, tilt: multiply_weights(tilt, w) }]
            }
            LevyTerm::Tail { c, gamma, tilt } => {
                vec![LevyTerm::Tail { c: *c, gamma: *gamma, tilt: multiply_weights(tilt, w) }]
            }
        }
    }
}

/// `∫₁^∞ (e^{−λℓ} − 1) ℓ^{−1−γ} W(ℓ) dℓ`, split per weight.
fn power_tail_exp_m1<T: Scalar>(lambda: T, g: T, tilt: &[ExpWeight<T>]) -> T {
    let p = T::one() + g;
    tilt.iter().fold(T::zero(), |acc, w| {
        let rate = (w.rate + lambda.min(T::zero())).max(T::zero());
        let v = tail_integral(|l: T| (-lambda * l).exp_m1() * (-(w.rate - rate) * l).exp(), p, rate);
        acc + w.coef * v
    })
}

impl<T: Scalar> LevyMeasure<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<LevyTerm<T>>) -> Self {
        Self { terms }.normalized()
    }

    pub fn from_specs(specs: &[LevyTermSpec]) -> Self {
        Self::from_terms(specs.iter().map(LevyTerm::from_spec).collect())
    }

    pub fn atom(location: T, mass: T) -> Self {
        Self { terms: vec![LevyTerm::Atom { location, mass }] }
    }

    pub fn exp_density(c: T, rho: T) -> Self {
        Self { terms: vec![LevyTerm::Exp { c, rho }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::from_terms(terms)
    }

    /// Merge atoms at the same location and exponentials with the same rate.
    fn normalized(self) -> Self {
        let mut out: Vec<LevyTerm<T>> = Vec::new();
        for t in self.terms {
            let merged = match &t {
                LevyTerm::Atom { location, mass } => out.iter_mut().any(|o| match o {
                    LevyTerm::Atom { location: l, mass: m } if *l == *location => {
                        *m = *m + *mass;
                        true
                    }
                    _ => false,
                }),
                LevyTerm::Exp { c, rho } => out.iter_mut().any(|o| match o {
                    LevyTerm::Exp { c: oc, rho: r } if *r == *rho => {
                        *oc = *oc + *c;
                        true
                    }
                    _ => false,
                }),
                _ => false,
            };
            if !merged {
                out.push(t);
            }
        }
        out.retain(|t| match t {
            LevyTerm::Atom { mass, .. } => *mass != T::zero(),
            LevyTerm::Exp { c, .. } => *c != T::zero(),
            _ => true,
        });
        Self { terms: out }
    }

    pub fn multiplied(&self, w: &[ExpWeight<T>]) -> Self {
        Self::from_terms(self.terms.iter().flat_map(|t| t.multiplied(w)).collect())
    }

    pub fn validate_branching(&self) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.validate_branching())
    }

    pub fn validate_immigration(&self) -> Result<()> {
        self.terms.iter().try_for_each(|t| t.validate_immigration())
    }

    pub fn psi_part(&self, lambda: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.psi_part(lambda))
    }

    pub fn phi_part(&self, lambda: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.phi_part(lambda))
    }

    pub fn first_moment_above_one(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.first_moment_above_one())
    }

    pub fn first_moment_below_one(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.first_moment_below_one())
    }

    pub fn shift_correction(&self, theta: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.shift_correction(theta))
    }

    pub fn theta_zero(&self) -> (T, bool) {
        let mut best = (T::infinity(), true);
        for t in &self.terms {
            let (th, closed) = t.theta_zero();
            if th < best.0 {
                best = (th, closed);
            } else if th == best.0 {
                best.1 &= closed;
            }
        }
        best
    }

    /// True when every term has a closed-form Laplace exponent.
    pub fn is_closed_form(&self) -> bool {
        self.terms.iter().all(|t| match t {
            LevyTerm::Atom { .. } | LevyTerm::Exp { .. } => true,
            LevyTerm::Stable { tilt, .. } => is_unit_tilt(tilt),
            LevyTerm::Tail { .. } => false,
        })
    }

    /// Smallest index among power terms whose tail makes `∫_{ℓ>1} ℓ π` diverge.
    pub(crate) fn heavy_tail_index(&self) -> Option<T> {
        self.terms
            .iter()
            .filter_map(|t| match t {
                LevyTerm::Stable { gamma, tilt, .. } | LevyTerm::Tail { gamma, tilt, .. } => {
                    (*gamma <= T::one() && min_rate(tilt) == T::zero() && leading_coef(tilt) > T::zero())
                        .then_some(*gamma)
                }
                _ => None,
            })
            .fold(None, |m: Option<T>, g| Some(m.map_or(g, |m| m.min(g))))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.terms.iter().filter_map(|t| match t {
            LevyTerm::Atom { location, mass } => Some((*location, *mass)),
            _ => None,
        })
    }

    /// Total mass, +∞ for power terms on (0, ∞).
    pub fn total_mass(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| {
            acc + match t {
                LevyTerm::Atom { mass, .. } => *mass,
                LevyTerm::Exp { c, rho } => *c / *rho,
                LevyTerm::Stable { .. } => T::infinity(),
                LevyTerm::Tail { c, gamma, tilt } => {
                    let p = T::one() + *gamma;
                    *c * tilt.iter().fold(T::zero(), |a, w| a + w.coef * tail_integral(|_| T::one(), p, w.rate))
                }
            }
        })
    }

    /// Density of the absolutely continuous part at `ℓ > 0`; atoms are ignored.
    pub fn density_at(&self, l: T) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| {
            acc + match t {
                LevyTerm::Atom { .. } => T::zero(),
                LevyTerm::Exp { c, rho } => *c * (-*rho * l).exp(),
                LevyTerm::Stable { c, gamma, tilt } => *c * l.powf(-T::one() - *gamma) * weight_at(tilt, l),
                LevyTerm::Tail { c, gamma, tilt } if l > T::one() => {
                    *c * l.powf(-T::one() - *gamma) * weight_at(tilt, l)
                }
                LevyTerm::Tail { .. } => T::zero(),
            }
        })
    }

    /// `∫ f(ℓ) π(dℓ)` over the whole measure; power terms by quadrature.
    pub fn integrate_against<F: Fn(T) -> T>(&self, f: F) -> T {
        let opts = quad_opts();
        self.terms.iter().fold(T::zero(), |acc, t| {
            acc + match t {
                LevyTerm::Atom { location, mass } => *mass * f(*location),
                LevyTerm::Exp { c, rho } => {
                    *c * integrate_exp_tail(|l: T| f(l) * (-*rho * l).exp(), T::zero(), *rho, &opts).value
                }
                LevyTerm::Stable { c, gamma, tilt } => {
                    let g = *gamma;
                    let near =
                        integrate(|l: T| f(l) * l.powf(-T::one() - g) * weight_at(tilt, l), T::zero(), T::one(), &opts);
                    *c * (near.value + power_tail_integrate(&f, g, tilt))
                }
                LevyTerm::Tail { c, gamma, tilt } => *c * power_tail_integrate(&f, *gamma, tilt),
            }
        })
    }
}

fn power_tail_integrate<T: Scalar, F: Fn(T) -> T>(f: &F, g: T, tilt: &[ExpWeight<T>]) -> T {
    let p = T::one() + g;
    tilt.iter().fold(T::zero(), |acc, w| acc + w.coef * tail_integral(f, p, w.rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn em1pl_matches_direct_evaluation() {
        for &z in &[1e-8f64, 1e-3, 0.3, 0.49, 0.51, 2.0, -0.3] {
            let direct = (-z).exp() - 1.0 + z;
            assert_relative_eq!(em1pl(z), direct, max_relative = 1e-7);
        }
        assert_relative_eq!(em1pl(1e-8f64), 5e-17, max_relative = 1e-7);
    }

    #[test]
    fn first_moment_unit_branches_agree() {
        let lo: f64 = first_moment_unit(0.4999999);
        let hi: f64 = first_moment_unit(0.5000001);
        assert!((lo - hi).abs() < 1e-7);
        assert_relative_eq!(first_moment_unit(0.0f64), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn stable_closed_form_matches_quadrature() {
        for &g in &[0.5f64, 1.3, 1.7] {
            let plain = LevyTerm::stable(0.8, g);
            // a unit tilt split in two halves forces the quadrature path
            let split = LevyTerm::Stable {
                c: 0.8,
                gamma: g,
                tilt: vec![ExpWeight { coef: 0.5, rate: 0.0 }, ExpWeight { coef: 0.5, rate: 0.0 }],
            };
            for &lam in &[0.1, 1.0, 7.5] {
                let a = plain.psi_part(lam);
                let b = split.psi_part(lam);
                assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "γ={g} λ={lam}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stable_phi_closed_form_matches_quadrature() {
        let plain = LevyTerm::stable(1.0, 0.4f64);
        let split = LevyTerm::Stable {
            c: 1.0,
            gamma: 0.4,
            tilt: vec![ExpWeight { coef: 0.5, rate: 0.0 }, ExpWeight { coef: 0.5, rate: 0.0 }],
        };
        for &lam in &[0.2, 3.0] {
            assert!((plain.phi_part(lam) - split.phi_part(lam)).abs() < 1e-8);
        }
    }

    #[test]
    fn exp_density_against_quadrature() {
        let m = LevyMeasure::exp_density(1.5, 2.0f64);
        let lam = 1.7;
        let direct = m.integrate_against(|l| em1pl(lam * l) - if l > 1.0 { lam * l } else { 0.0 });
        assert!((m.psi_part(lam) - direct).abs() < 1e-10);
    }

    #[test]
    fn tilted_exp_merges_rates() {
        let m = LevyMeasure::exp_density(1.0, 3.0f64);
        let w = [ExpWeight { coef: 1.0, rate: -1.0 }, ExpWeight { coef: -1.0, rate: 0.0 }];
        let t = m.multiplied(&w);
        assert_eq!(t.terms, vec![LevyTerm::Exp { c: 1.0, rho: 2.0 }, LevyTerm::Exp { c: -1.0, rho: 3.0 }]);
    }
}
