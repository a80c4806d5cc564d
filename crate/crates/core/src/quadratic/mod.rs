//! Closed forms for `ψ(u) = αu + u²`, `ψ⁰(u) = (α+2θ)u + u²`, `φ(u) = 2θu`.
//!
//! X is the total population (CB(ψ)), Y⁰ the Eve population (CB(ψ⁰)).

use crate::error::{domain, Error, Result};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::numerics::quadrature::{integrate, QuadOptions};
use crate::scalar::Scalar;

const SERIES_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticParams<T> {
    pub alpha: T,
    pub theta: T,
    pub x: T,
}

impl<T: Scalar> QuadraticParams<T> {
    /// `alpha ≥ 0` (critical or subcritical), `theta ≥ 0`, `x ≥ 0`.
    pub fn new(alpha: T, theta: T, x: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha.is_finite()) {
            return Err(Error::InvalidMechanism(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(theta >= T::zero() && theta.is_finite()) {
            return Err(Error::InvalidMechanism(format!("theta must be >= 0, got {theta}")));
        }
        if !(x >= T::zero() && x.is_finite()) {
            return Err(Error::InvalidMechanism(format!("initial mass must be >= 0, got {x}")));
        }
        Ok(Self { alpha, theta, x })
    }

    /// `b = α + 2θ`.
    pub fn b(&self) -> T {
        self.alpha + T::c(2.0) * self.theta
    }

    pub fn psi(&self) -> BranchingMechanism<T> {
        BranchingMechanism::quadratic(self.alpha, T::one())
    }

    pub fn psi0(&self) -> BranchingMechanism<T> {
        BranchingMechanism::quadratic(self.b(), T::one())
    }

    pub fn phi(&self) -> ImmigrationMechanism<T> {
        ImmigrationMechanism::linear(T::c(2.0) * self.theta)
    }
}

fn quad_opts<T: Scalar>() -> QuadOptions<T> {
    QuadOptions::default().with_abs_tol(T::c(1e-12).max(T::tol_floor())).with_panels(64)
}

/// `g(a,t) = (e^{at} − 1)/a`, and `t` at `a = 0`.
pub fn g_func<T: Scalar>(a: T, t: T) -> T {
    let z = a * t;
    if z.abs() < T::c(SERIES_CUTOFF) {
        t * (T::one() + z / T::c(2.0) + z * z / T::c(6.0))
    } else {
        z.exp_m1() / a
    }
}

/// `∂ₐg(a,t)` and `∂ₐ²g(a,t)`.
fn g_derivs<T: Scalar>(a: T, t: T) -> (T, T) {
    let z = a * t;
    if z.abs() < T::c(0.1) {
        // ∂ₐg = Σ (m+1) aᵐ t^{m+2}/(m+2)!,  ∂ₐ²g = Σ (m+1)(m+2) aᵐ t^{m+3}/(m+3)!
        let (mut d1, mut d2) = (T::zero(), T::zero());
        let mut p = t * t / T::c(2.0);
        let mut q = t * t * t / T::c(6.0);
        for m in 0..30 {
            let mf = T::c(m as f64);
            d1 = d1 + (mf + T::one()) * p;
            d2 = d2 + (mf + T::one()) * (mf + T::c(2.0)) * q;
            p = p * z / T::c((m + 3) as f64);
            q = q * z / T::c((m + 4) as f64);
        }
        (d1, d2)
    } else {
        let e = z.exp();
        let em1 = z.exp_m1();
        let d1 = (t * e * a - em1) / (a * a);
        let d2 = t * t * e / a - T::c(2.0) * t * e / (a * a) + T::c(2.0) * em1 / (a * a * a);
        (d1, d2)
    }
}

/// `h(t) = 1 + λ₁e^{−αt}g(α,t)`.
pub fn h_func<T: Scalar>(p: &QuadraticParams<T>, lambda1: T, t: T) -> T {
    // e^{−αt}g(α,t) = g(−α,t)
    T::one() + lambda1 * g_func(-p.alpha, t)
}

/// `w*(s) = λ₁e^{−α(t−s)}/h(t−s)`, the X-exponent on `[0, t]`.
pub fn w_star<T: Scalar>(p: &QuadraticParams<T>, lambda1: T, t: T, s: T) -> Result<T> {
    if s > t {
        return domain(format!("w_star needs s <= t, got s = {s}, t = {t}"));
    }
    let r = t - s;
    Ok(lambda1 * (-p.alpha * r).exp() / h_func(p, lambda1, r))
}

/// `∫_lo^hi e^{−br}h(r)^{−2} dr`.
fn eh_integral<T: Scalar>(p: &QuadraticParams<T>, lambda1: T, lo: T, hi: T) -> T {
    let b = p.b();
    if lambda1 == T::zero() {
        return (-b * lo).exp() * g_func(-b, hi - lo);
    }
    integrate(
        |r: T| {
            let h = h_func(p, lambda1, r);
            (-b * r).exp() / (h * h)
        },
        lo,
        hi,
        &quad_opts(),
    )
    .value
}

/// `E[e^{−λ₁X_t − λ₂Y⁰_t}] = e^{−x·v₀(t)}`.
pub fn v0<T: Scalar>(p: &QuadraticParams<T>, lambda1: T, lambda2: T, t: T) -> Result<T> {
    if !(t >= T::zero() && lambda1 >= T::zero() && lambda2 >= T::zero()) {
        return domain(format!("v0 needs t, lambda1, lambda2 >= 0, got ({t}, {lambda1}, {lambda2})"));
    }
    let ht = h_func(p, lambda1, t);
    let marginal = lambda1 * (-p.alpha * t).exp() / ht;
    if lambda2 == T::zero() {
        return Ok(marginal);
    }
    let i = eh_integral(p, lambda1, T::zero(), t);
    Ok(lambda2 * (-p.b() * t).exp() / (ht * ht * (T::one() + lambda2 * i)) + marginal)
}

/// `E[e^{−λ₁X_t − λ₂Y⁰_u}] = e^{−x·v₁(u,t)}`, `0 ≤ u < t`.
pub fn v1<T: Scalar>(p: &QuadraticParams<T>, lambda1: T, lambda2: T, u: T, t: T) -> Result<T> {
    if !(u >= T::zero() && u < t) {
        return domain(format!("v1 needs 0 <= u < t, got u = {u}, t = {t}"));
    }
    if !(lambda1 >= T::zero() && lambda2 >= T::zero()) {
        return domain(format!("v1 needs lambda1, lambda2 >= 0, got ({lambda1}, {lambda2})"));
    }
    let b = p.b();
    let ht = h_func(p, lambda1, t);
    let marginal = lambda1 * (-p.alpha * t).exp() / ht;
    if lambda2 == T::zero() {
        return Ok(marginal);
    }
    let hm = h_func(p, lambda1, t - u);
    let j = eh_integral(p, lambda1, t - u, t);
    let den = (-b * (t - u)).exp() / (hm * hm) + lambda2 * j;
    Ok(lambda2 * (-b * t).exp() / (ht * ht * den) + marginal)
}

/// `(P(X_t = 0), P(Y⁰_t = 0), P(Y⁰_t > 0 | X_t > 0))`.
pub fn extinction_and_conditional<T: Scalar>(p: &QuadraticParams<T>, t: T) -> Result<(T, T, T)> {
    if !(t >= T::zero()) {
        return domain(format!("t must be >= 0, got {t}"));
    }
    if p.x == T::zero() {
        return Ok((T::one(), T::one(), T::one()));
    }
    if t == T::zero() {
        return Ok((T::zero(), T::zero(), T::one()));
    }
    let ex = -p.x / g_func(p.alpha, t);
    let ey = -p.x / g_func(p.b(), t);
    Ok((ex.exp(), ey.exp(), ey.exp_m1() / ex.exp_m1()))
}

/// `P(τ_X ≤ t, τ_{Y⁰} ≤ u)` for `0 < u ≤ t`.
pub fn joint_extinction_cdf<T: Scalar>(p: &QuadraticParams<T>, u: T, t: T) -> Result<T> {
    if !(u >= T::zero() && u <= t) {
        return domain(format!("joint_extinction_cdf needs 0 <= u <= t, got u = {u}, t = {t}"));
    }
    if p.x == T::zero() {
        return Ok(T::one());
    }
    if u == T::zero() {
        return Ok(T::zero());
    }
    let a = p.alpha;
    let gt = g_func(a, t);
    if u == t {
        // Y⁰ ≤ X pathwise, so the event is {τ_X ≤ t}
        return Ok((-p.x / gt).exp());
    }
    let c = T::c(2.0) * a - p.b();
    // r = e^y spreads the g(α,r)^{−2} peak near r = t − u
    let i = integrate(
        |y: T| {
            let r = y.exp();
            let g = g_func(a, r);
            (c * (r - t)).exp() * (gt / g) * (gt / g) * r
        },
        (t - u).ln(),
        t.ln(),
        &quad_opts(),
    )
    .value;
    Ok((-p.x * (T::one() / i + T::one() / gt)).exp())
}

/// `P(τ_{Y⁰} = τ_X | τ_X = t) = e^{−2θt}`.
pub fn simultaneous_extinction<T: Scalar>(p: &QuadraticParams<T>, t: T) -> T {
    (-T::c(2.0) * p.theta * t).exp()
}

/// Density of τ_X: `x e^{αt} g(α,t)^{−2} exp(−x/g(α,t))`.
pub fn extinction_time_density<T: Scalar>(p: &QuadraticParams<T>, t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    let g = g_func(p.alpha, t);
    p.x * (p.alpha * t).exp() / (g * g) * (-p.x / g).exp()
}

/// `P(τ_{Y⁰} = τ_X | τ_X ∈ [t−δ, t+δ]) = E[e^{−2θτ_X} | τ_X ∈ [t−δ, t+δ]]`.
pub fn bucket_simultaneous<T: Scalar>(p: &QuadraticParams<T>, t: T, delta: T) -> Result<T> {
    if !(delta > T::zero() && t - delta > T::zero()) {
        return domain(format!("bucket [t-δ, t+δ] must lie in (0, ∞), got t = {t}, δ = {delta}"));
    }
    let (lo, hi) = (t - delta, t + delta);
    let opts = quad_opts();
    let num = integrate(|s: T| simultaneous_extinction(p, s) * extinction_time_density(p, s), lo, hi, &opts).value;
    let den = integrate(|s: T| extinction_time_density(p, s), lo, hi, &opts).value;
    Ok(num / den)
}

/// `A(b,u) = e^{bu}/λ₂ + g(b,u)`.
fn a_of<T: Scalar>(p: &QuadraticParams<T>, lambda2: T, u: T) -> T {
    let b = p.b();
    (b * u).exp() / lambda2 + g_func(b, u)
}

/// `G(a,u) = (2/λ₂)e^{bu}g(a,u) + 2(g(b+a,u) − g(b,u))/a`, with `2∂₁g(b,u)`
/// in place of the difference quotient at `a = 0`.
pub fn g_big<T: Scalar>(p: &QuadraticParams<T>, lambda2: T, a: T, u: T) -> T {
    let b = p.b();
    let two = T::c(2.0);
    let first = two / lambda2 * (b * u).exp() * g_func(a, u);
    let (d1, d2) = g_derivs(b, u);
    let second = if (a * u).abs() < T::c(SERIES_CUTOFF) {
        two * (d1 + a / two * d2)
    } else {
        two * (g_func(b + a, u) - g_func(b, u)) / a
    };
    first + second
}

/// `lim_{t→∞} E[e^{−λ₂Y⁰_u} | X_t > 0] = e^{−x/A}(1 − G(α,u)/A²)`.
pub fn cond_laplace_limit<T: Scalar>(p: &QuadraticParams<T>, lambda2: T, u: T) -> Result<T> {
    if !(lambda2 >= T::zero() && u >= T::zero()) {
        return domain(format!("need lambda2, u >= 0, got ({lambda2}, {u})"));
    }
    if lambda2 == T::zero() {
        return Ok(T::one());
    }
    let a = a_of(p, lambda2, u);
    Ok((-p.x / a).exp() * (T::one() - g_big(p, lambda2, p.alpha, u) / (a * a)))
}

/// `E[e^{−λ₂Y⁰_u} | X_t > 0]` for `0 ≤ u < t`, from the λ₁ → ∞ limit of v₁.
///
/// With `D = 1/(v̄₁ − 1/g(α,t))` the numerator is `e^{−x/A}(1 − e^{−xΔ})`,
/// `Δ = 1/g(α,t) − (D−A)/(AD)`. `D − A` is assembled from
/// `ε(v) = g_v/g_{t−v}·(g_t/g_{t−v} + e^{αv})` (all g at α), which avoids the
/// cancellation between D and A for large t.
pub fn cond_laplace_finite<T: Scalar>(p: &QuadraticParams<T>, lambda2: T, u: T, t: T) -> Result<T> {
    if !(u >= T::zero() && u < t && lambda2 >= T::zero()) {
        return domain(format!("need 0 <= u < t and lambda2 >= 0, got u = {u}, t = {t}, lambda2 = {lambda2}"));
    }
    if p.x == T::zero() {
        return domain("conditioning on X_t > 0 needs x > 0");
    }
    if lambda2 == T::zero() {
        return Ok(T::one());
    }
    let al = p.alpha;
    let c = T::c(2.0) * al - p.b();
    let gt = g_func(al, t);
    let eps = |v: T| -> T {
        let gm = g_func(al, t - v);
        g_func(al, v) / gm * (gt / gm + (al * v).exp())
    };
    let dma =
        (-c * u).exp() * eps(u) / lambda2 + integrate(|v: T| (-c * v).exp() * eps(v), T::zero(), u, &quad_opts()).value;
    let a = a_of(p, lambda2, u);
    let d = a + dma;
    let delta = T::one() / gt - dma / (a * d);
    let x = p.x;
    Ok((-x / a).exp() * (-x * delta).exp_m1() / (-x / gt).exp_m1())
}
