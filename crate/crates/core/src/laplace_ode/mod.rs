//! Laplace exponents of CB and CBI processes by backward ODE integration.
//!
//! `u(t,λ)` solves `∂ₜu = −ψ(u)`, `u(0) = λ`. Against a finite measure μ with
//! support bounded by H, `w(s) + ∫ₛ^∞ ψ(w(r))dr = μ([s,∞))`, so w vanishes
//! above H, jumps up by the atom masses and follows `w' = ψ(w) − density`.

mod grid;
mod measure;

pub use grid::{sup_gap, Beyond, GridFunction};
pub use measure::FiniteMeasureOnR;

use crate::error::{domain, Error, Result};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::numerics::quadrature::{integrate, QuadOptions};
use crate::numerics::roots::brent;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LaplaceSolver<T> {
    pub ode: OdeOptions<T>,
    pub quad: QuadOptions<T>,
}

impl<T: Scalar> Default for LaplaceSolver<T> {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), quad: QuadOptions::default().with_abs_tol(T::c(1e-13)) }
    }
}

fn require_conservative<T: Scalar>(psi: &BranchingMechanism<T>) -> Result<()> {
    if psi.is_conservative() {
        Ok(())
    } else {
        Err(Error::NonConservative(format!("psi'(0+) = {}", psi.psi_prime_at_zero())))
    }
}

fn require_unique<T: Scalar>(psi: &BranchingMechanism<T>, mu: &FiniteMeasureOnR<T>) -> Result<()> {
    if psi.psi_prime_at_zero().is_finite() || mu.is_zero() || mu.has_top_atom() {
        Ok(())
    } else {
        Err(Error::Uniqueness(
            "psi'(0+) = -inf and the measure has no atom at the top of its support; \
             the integral equation may have several solutions"
                .into(),
        ))
    }
}

struct Backward<T> {
    comps: Vec<GridFunction<T>>,
    bottom: Vec<T>,
}

/// Integrates a vector system from `top` down to `bottom`. `rhs(s, mid, y, dy)`
/// gives dy/ds, with `mid` the midpoint of the current breakpoint segment for
/// looking up piecewise-constant data; `jump(s, y)` is applied on arrival at
/// each breakpoint in `[bottom, top)`.
fn integrate_backward<T, F, J>(
    top: T,
    bottom: T,
    y_top: Vec<T>,
    breaks: &[T],
    mut rhs: F,
    mut jump: J,
    opts: &OdeOptions<T>,
) -> Result<Backward<T>>
where
    T: Scalar,
    F: FnMut(T, T, &[T], &mut [T]),
    J: FnMut(T, &mut [T]),
{
    let n = y_top.len();
    let mut stops: Vec<T> = breaks.iter().copied().filter(|&b| b >= bottom && b < top).collect();
    stops.push(bottom);
    stops.sort_by(|a, b| b.partial_cmp(a).expect("finite breakpoints"));
    stops.dedup();

    let mut raw: Vec<Vec<(T, T, [T; 5])>> = vec![Vec::new(); n];
    let mut y = y_top;
    let mut hi = top;
    for &lo in &stops {
        if lo < hi {
            let seg_top = hi;
            let mid = T::c(0.5) * (hi + lo);
            let steps = dopri5(
                |tau: T, yy: &[T], d: &mut [T]| {
                    rhs(seg_top - tau, mid, yy, d);
                    for v in d.iter_mut() {
                        *v = -*v;
                    }
                },
                T::zero(),
                seg_top - lo,
                &y,
                opts,
            )
            .map_err(|e| match e {
                Error::Solver { at, reason } => Error::Solver { at: seg_top.f64() - at, reason },
                other => other,
            })?;
            for st in &steps {
                let (s_hi, s_lo) = (seg_top - st.t0, if st.t1 == seg_top - lo { lo } else { seg_top - st.t1 });
                for (i, r) in raw.iter_mut().enumerate() {
                    r.push((s_lo, s_hi, st.cont[i]));
                }
            }
            if let Some(last) = steps.last() {
                y.clone_from(&last.y1);
            }
        }
        jump(lo, &mut y);
        hi = lo;
    }
    for (i, r) in raw.iter_mut().enumerate() {
        r.push((bottom, bottom, [y[i], T::zero(), T::zero(), T::zero(), T::zero()]));
    }
    let tol = opts.tol();
    Ok(Backward { comps: raw.into_iter().map(|r| GridFunction::from_reversed_pieces(r, tol)).collect(), bottom: y })
}

impl<T: Scalar> LaplaceSolver<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { ode: OdeOptions::default().with_tol(tol), ..Self::default() }
    }

    /// `u(t, λ)` by integrating `du/dt = −ψ(u)` from `u(0) = λ`.
    pub fn solve_u(&self, psi: &BranchingMechanism<T>, t: T, lambda: T) -> Result<T> {
        require_conservative(psi)?;
        if !(t >= T::zero()) || !(lambda >= T::zero()) {
            return domain(format!("solve_u needs t >= 0 and lambda >= 0, got ({t}, {lambda})"));
        }
        if t == T::zero() || lambda == T::zero() {
            return Ok(lambda);
        }
        let steps = dopri5(
            |_, y: &[T], d: &mut [T]| d[0] = -psi.value(y[0].max(T::zero())),
            T::zero(),
            t,
            &[lambda],
            &self.ode,
        )?;
        Ok(steps.last().map_or(lambda, |s| s.y1[0]).max(T::zero()))
    }

    /// `u(t, λ)` from `∫_u^λ dr/ψ(r) = t` by root finding.
    pub fn solve_u_inverse(&self, psi: &BranchingMechanism<T>, t: T, lambda: T) -> Result<T> {
        require_conservative(psi)?;
        if !(t >= T::zero()) || !(lambda > T::zero()) {
            return domain(format!("solve_u_inverse needs t >= 0 and lambda > 0, got ({t}, {lambda})"));
        }
        let p = psi.value(lambda);
        if t == T::zero() || p == T::zero() {
            return Ok(lambda);
        }
        // u moves monotonically from λ towards the adjacent zero r* of ψ
        let root = psi.positive_root();
        let (r_star, dir) = if p > T::zero() {
            (root.filter(|&r| r < lambda).unwrap_or(T::zero()), T::one())
        } else {
            match root.filter(|&r| r > lambda) {
                Some(r) => (r, -T::one()),
                None => {
                    return Err(Error::Inapplicable(format!("psi stays negative above lambda = {lambda}")));
                }
            }
        };
        // r = r* + dir·e^y keeps the integrand smooth up to the fixed point
        let y_top = (dir * (lambda - r_star)).ln();
        let g = |y: T| -> T {
            integrate(
                |z: T| {
                    let e = z.exp();
                    dir * e / psi.value(r_star + dir * e)
                },
                y,
                y_top,
                &self.quad,
            )
            .value
        };
        let mut width = T::one();
        let mut y_lo = y_top - width;
        let mut guard = 0;
        while g(y_lo) < t {
            width = width * T::c(2.0);
            y_lo = y_top - width;
            guard += 1;
            if guard > 12 || !(r_star + dir * y_lo.exp() != r_star) {
                return Err(Error::Inapplicable("could not bracket u(t, lambda) away from the fixed point".into()));
            }
        }
        let y = brent(|y| g(y) - t, y_lo, y_top, T::c(1e-15), 200)?;
        Ok(r_star + dir * y.exp())
    }

    /// Solves `w(s) + ∫ₛ^∞ ψ(w) = μ([s,∞))` on `[s, H]`.
    pub fn solve_w(&self, psi: &BranchingMechanism<T>, mu: &FiniteMeasureOnR<T>, s: T) -> Result<GridFunction<T>> {
        require_conservative(psi)?;
        require_unique(psi, mu)?;
        let h = mu.h();
        if mu.is_zero() || s > h {
            return Ok(GridFunction::zero());
        }
        let run = integrate_backward(
            h,
            s,
            vec![mu.atom_at(h)],
            &mu.breakpoints(),
            |_, mid, y, d| d[0] = psi.value(y[0].max(T::zero())) - mu.density_at(mid),
            |r, y| y[0] = y[0] + mu.atom_at(r),
            &self.ode,
        )?;
        Ok(run.comps.into_iter().next().expect("one component"))
    }

    /// `exp(−x·w(s) − ∫₀^∞ h(t) φ(w(s+t)) dt)`.
    #[allow(clippy::too_many_arguments)]
    pub fn cbi_laplace(
        &self,
        psi: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        h: &GridFunction<T>,
        mu: &FiniteMeasureOnR<T>,
        x: T,
        s: T,
    ) -> Result<T> {
        require_conservative(psi)?;
        require_unique(psi, mu)?;
        if !(x >= T::zero()) {
            return domain(format!("initial mass must be >= 0, got {x}"));
        }
        let top = mu.h();
        if mu.is_zero() || s > top {
            return Ok(T::one());
        }
        let mut breaks = mu.breakpoints();
        breaks.extend(h.knots().into_iter().map(|k| s + k));
        let run = integrate_backward(
            top,
            s,
            vec![mu.atom_at(top), T::zero()],
            &breaks,
            |r, mid, y, d| {
                let w = y[0].max(T::zero());
                d[0] = psi.value(w) - mu.density_at(mid);
                d[1] = -h.eval(r - s).max(T::zero()) * phi.value(w);
            },
            |r, y| y[0] = y[0] + mu.atom_at(r),
            &self.ode,
        )?;
        Ok((-x * run.bottom[0] - run.bottom[1]).exp())
    }

    /// `w₀ … wₙ` where `wₖ` solves the equation under ψ⁰ for
    /// `μ_{n−k}(dr) + φ(w_{k−1}(r))dr`, integrated jointly on `[s, H]`.
    pub fn iterate_wk(
        &self,
        psi0: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        mus: &[FiniteMeasureOnR<T>],
        s: T,
    ) -> Result<Vec<GridFunction<T>>> {
        require_conservative(psi0)?;
        if mus.is_empty() {
            return domain("iterate_wk needs at least one measure");
        }
        for mu in mus {
            require_unique(psi0, mu)?;
        }
        let n = mus.len() - 1;
        let top = mus.iter().fold(T::neg_infinity(), |m, mu| m.max(mu.h()));
        if top == T::neg_infinity() || s > top {
            return Ok(vec![GridFunction::zero(); n + 1]);
        }
        let measure = |k: usize| &mus[n - k];
        let breaks: Vec<T> = mus.iter().flat_map(|m| m.breakpoints()).collect();
        let run = integrate_backward(
            top,
            s,
            (0..=n).map(|k| measure(k).atom_at(top)).collect(),
            &breaks,
            |_, mid, y, d| {
                for k in 0..=n {
                    let w = y[k].max(T::zero());
                    d[k] = psi0.value(w) - measure(k).density_at(mid);
                    if k > 0 {
                        d[k] = d[k] - phi.value(y[k - 1].max(T::zero()));
                    }
                }
            },
            |r, y| {
                for (k, v) in y.iter_mut().enumerate() {
                    *v = *v + measure(k).atom_at(r);
                }
            },
            &self.ode,
        )?;
        Ok(run.comps)
    }

    fn joint_system(
        &self,
        psi0: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        t: T,
        lambda1: T,
        lambda2: T,
        u: Option<T>,
    ) -> Result<Backward<T>> {
        let psi = psi0.subtract_immigration(phi)?;
        require_conservative(&psi)?;
        require_conservative(psi0)?;
        if !(t >= T::zero()) || !(lambda1 >= T::zero()) || !(lambda2 >= T::zero()) {
            return domain(format!("need t, lambda1, lambda2 >= 0, got ({t}, {lambda1}, {lambda2})"));
        }
        // state [w*, w]
        let (start_w, breaks) = match u {
            None => (lambda1 + lambda2, vec![]),
            Some(u) => (lambda1, vec![u]),
        };
        integrate_backward(
            t,
            T::zero(),
            vec![lambda1, start_w],
            &breaks,
            |_, _, y, d| {
                let ws = y[0].max(T::zero());
                let w = y[1].max(T::zero());
                let fs = phi.value(ws);
                d[0] = psi0.value(ws) - fs;
                d[1] = psi0.value(w) - fs;
            },
            |r, y| {
                if u == Some(r) {
                    y[1] = y[1] + lambda2;
                }
            },
            &self.ode,
        )
    }

    /// `(w(0), w*(0))` with `E[e^{−λ₁X_t − λ₂Y⁰_t}] = e^{−x·w(0)}`.
    pub fn solve_joint_pair(
        &self,
        psi0: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        t: T,
        lambda1: T,
        lambda2: T,
    ) -> Result<(T, T)> {
        let run = self.joint_system(psi0, phi, t, lambda1, lambda2, None)?;
        Ok((run.bottom[1], run.bottom[0]))
    }

    /// The pair system as functions on `[0, t]`: `(w, w*)`.
    pub fn joint_pair_functions(
        &self,
        psi0: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        t: T,
        lambda1: T,
        lambda2: T,
    ) -> Result<(GridFunction<T>, GridFunction<T>)> {
        let mut run = self.joint_system(psi0, phi, t, lambda1, lambda2, None)?;
        let w = run.comps.pop().expect("two components");
        let ws = run.comps.pop().expect("two components");
        Ok((w, ws))
    }

    /// `w(0)` with `E[e^{−λ₁X_t − λ₂Y⁰_u}] = e^{−x·w(0)}`, `0 ≤ u < t`.
    pub fn solve_joint_two_times(
        &self,
        psi0: &BranchingMechanism<T>,
        phi: &ImmigrationMechanism<T>,
        u: T,
        t: T,
        lambda1: T,
        lambda2: T,
    ) -> Result<T> {
        if !(u >= T::zero() && u < t) {
            return domain(format!("need 0 <= u < t, got u = {u}, t = {t}"));
        }
        Ok(self.joint_system(psi0, phi, t, lambda1, lambda2, Some(u))?.bottom[1])
    }

    /// `sup_s |w(s) + ∫ₛ ψ(w) − μ([s,∞))|` over the nodes of `w`.
    pub fn residual(&self, psi: &BranchingMechanism<T>, w: &GridFunction<T>, mu: &FiniteMeasureOnR<T>) -> T {
        residual_general(w, mu, |_, v| psi.value(v.max(T::zero())))
    }

    /// As [`residual`](Self::residual) with an extra source density: checks
    /// `w(s) + ∫ₛ ψ(w) = μ([s,∞)) + ∫ₛ source`.
    pub fn residual_with_source<S: Fn(T) -> T>(
        &self,
        psi: &BranchingMechanism<T>,
        w: &GridFunction<T>,
        mu: &FiniteMeasureOnR<T>,
        source: S,
    ) -> T {
        residual_general(w, mu, |r, v| psi.value(v.max(T::zero())) - source(r))
    }
}

fn residual_general<T: Scalar, F: FnMut(T, T) -> T>(w: &GridFunction<T>, mu: &FiniteMeasureOnR<T>, f: F) -> T {
    let Some(top) = w.end() else {
        return mu.total_mass();
    };
    let pieces = w.piece_integrals(f);
    // above the stored domain w ≡ 0, so only μ((top, ∞)) contributes
    let mut worst = (mu.mass_from(top) - mu.atom_at(top)).abs();
    let mut acc = T::zero();
    worst = worst.max((w.eval(top) - mu.mass_from(top)).abs());
    for &(lo, _, v) in pieces.iter().rev() {
        acc = acc + v;
        worst = worst.max((w.eval(lo) + acc - mu.mass_from(lo)).abs());
    }
    worst
}

pub fn solve_u<T: Scalar>(psi: &BranchingMechanism<T>, t: T, lambda: T) -> Result<T> {
    LaplaceSolver::default().solve_u(psi, t, lambda)
}

pub fn solve_u_inverse<T: Scalar>(psi: &BranchingMechanism<T>, t: T, lambda: T) -> Result<T> {
    LaplaceSolver::default().solve_u_inverse(psi, t, lambda)
}

pub fn solve_w<T: Scalar>(psi: &BranchingMechanism<T>, mu: &FiniteMeasureOnR<T>, s: T) -> Result<GridFunction<T>> {
    LaplaceSolver::default().solve_w(psi, mu, s)
}

pub fn cbi_laplace<T: Scalar>(
    psi: &BranchingMechanism<T>,
    phi: &ImmigrationMechanism<T>,
    h: &GridFunction<T>,
    mu: &FiniteMeasureOnR<T>,
    x: T,
    s: T,
) -> Result<T> {
    LaplaceSolver::default().cbi_laplace(psi, phi, h, mu, x, s)
}

pub fn iterate_wk<T: Scalar>(
    psi0: &BranchingMechanism<T>,
    phi: &ImmigrationMechanism<T>,
    mus: &[FiniteMeasureOnR<T>],
    s: T,
) -> Result<Vec<GridFunction<T>>> {
    LaplaceSolver::default().iterate_wk(psi0, phi, mus, s)
}

pub fn solve_joint_pair<T: Scalar>(
    psi0: &BranchingMechanism<T>,
    phi: &ImmigrationMechanism<T>,
    t: T,
    lambda1: T,
    lambda2: T,
) -> Result<(T, T)> {
    LaplaceSolver::default().solve_joint_pair(psi0, phi, t, lambda1, lambda2)
}

pub fn solve_joint_two_times<T: Scalar>(
    psi0: &BranchingMechanism<T>,
    phi: &ImmigrationMechanism<T>,
    u: T,
    t: T,
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    LaplaceSolver::default().solve_joint_two_times(psi0, phi, u, t, lambda1, lambda2)
}

pub fn residual<T: Scalar>(psi: &BranchingMechanism<T>, w: &GridFunction<T>, mu: &FiniteMeasureOnR<T>) -> T {
    LaplaceSolver::default().residual(psi, w, mu)
}

#[cfg(test)]
mod tests;
