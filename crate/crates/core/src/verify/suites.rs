use super::{Check, McSpec, VerificationReport};
use crate::error::{domain, Error, Result};
use crate::laplace_ode::{
    iterate_wk, solve_joint_pair, solve_joint_two_times, solve_u, solve_w, FiniteMeasureOnR, GridFunction,
};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::quadratic::{
    bucket_simultaneous, cond_laplace_finite, cond_laplace_limit, extinction_and_conditional, joint_extinction_cdf, v0,
    v1, QuadraticParams,
};
use crate::simulate::{mc_laplace, mc_probability, MCEstimate, PathEnsemble, Scheme, Selector};

/// Tolerance for identities that hold up to rounding.
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Tolerance for ODE-versus-closed-form agreement.
pub const ODE_TOL: f64 = 1e-6;

/// `E[e^{−λX⁽ⁿ⁾_t}]` against `exp(−x·u_ψ(t,λ))`, `ψ = ψ⁰ − φ`, at each `(t, λ)`.
pub fn verify_theorem_main(
    psi0: &BranchingMechanism<f64>,
    phi: &ImmigrationMechanism<f64>,
    x: f64,
    ens: &PathEnsemble,
    points: &[(f64, f64)],
    z_gate: f64,
) -> Result<VerificationReport> {
    let psi = psi0.subtract_immigration(phi)?;
    if !psi.is_conservative() {
        return Err(Error::NonConservative("psi0 - phi is not conservative".into()));
    }
    let mut r = VerificationReport::new(Some(ens.rng_spec.seed), format!("theorem_main x={x} scheme={}", ens.scheme));
    for &(t, lambda) in points {
        let theory = (-x * solve_u(&psi, t, lambda)?).exp();
        let est = mc_laplace(ens, t, Selector::X { lambda })?;
        r.push(Check::mc(format!("theorem.laplace_X(t={t},lambda={lambda})"), theory, est, z_gate));
    }
    Ok(r)
}

/// Bivariate Laplace transforms of `(X_t, Y⁰_t)` and `(X_t, Y⁰_u)`, plus the ODE cross-check.
pub fn verify_joint_law(
    p: &QuadraticParams<f64>,
    ens: &PathEnsemble,
    pairs: &[(f64, f64)],
    u: f64,
    t: f64,
    z_gate: f64,
) -> Result<VerificationReport> {
    let mut r = VerificationReport::new(
        Some(ens.rng_spec.seed),
        format!("joint_law alpha={} theta={} x={}", p.alpha, p.theta, p.x),
    );
    let (psi0, phi) = (p.psi0(), p.phi());
    for &(l1, l2) in pairs {
        let th0 = (-p.x * v0(p, l1, l2, t)?).exp();
        let e0 = mc_laplace(ens, t, Selector::Pair { lambda1: l1, lambda2: l2 })?;
        r.push(Check::mc(format!("joint.v0(l1={l1},l2={l2},t={t})"), th0, e0, z_gate));
        let th1 = (-p.x * v1(p, l1, l2, u, t)?).exp();
        let e1 = mc_laplace(ens, t, Selector::PairAt { lambda1: l1, lambda2: l2, u })?;
        r.push(Check::mc(format!("joint.v1(l1={l1},l2={l2},u={u},t={t})"), th1, e1, z_gate));
        let (w0, _) = solve_joint_pair(&psi0, &phi, t, l1, l2)?;
        r.push(Check::abs(format!("joint.ode_v0(l1={l1},l2={l2})"), v0(p, l1, l2, t)?, w0, ODE_TOL));
        let w1 = solve_joint_two_times(&psi0, &phi, u, t, l1, l2)?;
        r.push(Check::abs(format!("joint.ode_v1(l1={l1},l2={l2})"), v1(p, l1, l2, u, t)?, w1, ODE_TOL));
    }
    Ok(r)
}

/// Parameter grid for the ODE-versus-closed-form comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeGrid {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub lambda1s: Vec<f64>,
    pub lambda2s: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Default for OdeGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.5, 1.0],
            thetas: vec![0.25, 0.5],
            lambda1s: vec![0.5, 2.0],
            lambda2s: vec![0.5, 2.0],
            ts: vec![0.5, 1.0, 2.0],
        }
    }
}

/// `|w₀ − v₀|` and `|w(u=t/2) − v₁|` over the grid; one check each for the worst case.
pub fn verify_ode_grid(grid: &OdeGrid, tol: f64) -> Result<VerificationReport> {
    let mut r = VerificationReport::new(None, "ode_grid");
    let (mut worst0, mut worst1) = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
    let mut label0 = String::new();
    let mut label1 = String::new();
    for &a in &grid.alphas {
        for &th in &grid.thetas {
            let p = QuadraticParams::new(a, th, 1.0)?;
            let (psi0, phi) = (p.psi0(), p.phi());
            for &l1 in &grid.lambda1s {
                for &l2 in &grid.lambda2s {
                    for &t in &grid.ts {
                        let c0 = v0(&p, l1, l2, t)?;
                        let (w0, _) = solve_joint_pair(&psi0, &phi, t, l1, l2)?;
                        if (w0 - c0).abs() >= worst0.0 {
                            worst0 = ((w0 - c0).abs(), c0, w0);
                            label0 = format!("alpha={a},theta={th},l1={l1},l2={l2},t={t}");
                        }
                        let c1 = v1(&p, l1, l2, t / 2.0, t)?;
                        let w1 = solve_joint_two_times(&psi0, &phi, t / 2.0, t, l1, l2)?;
                        if (w1 - c1).abs() >= worst1.0 {
                            worst1 = ((w1 - c1).abs(), c1, w1);
                            label1 = format!("alpha={a},theta={th},l1={l1},l2={l2},t={t}");
                        }
                    }
                }
            }
        }
    }
    r.push(Check::abs(format!("ode_grid.v0_worst({label0})"), worst0.1, worst0.2, tol));
    r.push(Check::abs(format!("ode_grid.v1_worst({label1})"), worst1.1, worst1.2, tol));
    Ok(r)
}

/// Extinction probabilities, the joint extinction CDF and the bucketed
/// simultaneous-extinction frequency at widths `δ` and `δ/2`.
pub fn verify_extinction_laws(
    p: &QuadraticParams<f64>,
    ens: &PathEnsemble,
    u: f64,
    t: f64,
    delta: f64,
    z_gate: f64,
) -> Result<VerificationReport> {
    if ens.scheme != Scheme::ExactQuadratic {
        return Err(Error::IncompatibleScheme(format!(
            "extinction laws need exact zeros (exact_quadratic), got {}",
            ens.scheme
        )));
    }
    if !(0.0 < u && u <= t) {
        return domain(format!("need 0 < u <= t, got u = {u}, t = {t}"));
    }
    let n = ens.n_paths();
    let (it, iu) = (ens.grid.index_of(t)?, ens.grid.index_of(u)?);
    let mut r = VerificationReport::new(
        Some(ens.rng_spec.seed),
        format!("extinction alpha={} theta={} x={} delta={delta}", p.alpha, p.theta, p.x),
    );
    let (px, py, cond) = extinction_and_conditional(p, t)?;
    r.push(Check::mc(format!("extinction.P(X_{t}=0)"), px, mc_probability(n, |i| ens.x(i)[it] == 0.0)?, z_gate));
    r.push(Check::mc(format!("extinction.P(Y0_{t}=0)"), py, mc_probability(n, |i| ens.y0(i)[it] == 0.0)?, z_gate));
    let alive: Vec<usize> = (0..n).filter(|&i| ens.x(i)[it] > 0.0).collect();
    if alive.len() >= 2 {
        let est = mc_probability(alive.len(), |j| ens.y0(alive[j])[it] > 0.0)?;
        r.push(Check::mc(format!("extinction.P(Y0_{t}>0|X_{t}>0)"), cond, est, z_gate));
    }
    // both components are absorbed at 0, so {τ ≤ s} = {value at s = 0}
    let joint = mc_probability(n, |i| ens.x(i)[it] == 0.0 && ens.y0(i)[iu] == 0.0)?;
    r.push(Check::mc(format!("extinction.joint_cdf(u={u},t={t})"), joint_extinction_cdf(p, u, t)?, joint, z_gate));

    let taus = ens.fine_extinction_times().map(<[_]>::to_vec).unwrap_or_else(|| ens.extinction_times(0.0));
    let target = (-2.0 * p.theta * t).exp();
    for d in [delta, delta / 2.0] {
        let sel: Vec<&(f64, f64)> = taus.iter().filter(|(_, tx)| (tx - t).abs() <= d + 1e-12).collect();
        if sel.len() < 2 {
            return domain(format!("bucket [t-{d}, t+{d}] holds {} paths; increase n_paths", sel.len()));
        }
        let est = MCEstimate::from_samples(sel.iter().map(|(ty, tx)| if ty == tx { 1.0 } else { 0.0 }))?;
        r.push(Check::mc(format!("extinction.simultaneous(t={t},delta={d})"), target, est, z_gate));
    }
    if p.theta > 0.0 {
        let b1 = (bucket_simultaneous(p, t, delta)? - target).abs();
        let b2 = (bucket_simultaneous(p, t, delta / 2.0)? - target).abs();
        r.push(Check::at_most(format!("extinction.bucket_bias_ratio(delta={delta})"), b2 / b1, 0.6));
    }
    Ok(r)
}

/// Simulation settings, initial mass and `(t, λ)` points for a law-level check.
pub type LawCheck<'a> = (&'a McSpec, f64, &'a [(f64, f64)]);

/// Algebraic shift/duality identities on `lambdas`, and optionally the law of
/// the cascade with `(ψ⁰, φ) = (m, φ_θ)` against `T_{−θ}(m)`.
pub fn verify_shift_identities(
    m: &BranchingMechanism<f64>,
    theta: f64,
    lambdas: &[f64],
    law: Option<LawCheck<'_>>,
) -> Result<VerificationReport> {
    if !m.theta_zero().admits(theta) || !(theta > 0.0) {
        return domain(format!("theta = {theta} is outside Θ of the mechanism"));
    }
    let down = m.shift(-theta)?;
    let up = m.shift(theta)?;
    let phi = m.phi_theta(theta)?;
    let tphi = m.tilde_phi_theta(theta)?;
    let worst = |f: &dyn Fn(f64) -> f64| lambdas.iter().fold(0.0f64, |acc, &l| acc.max(f(l).abs()));
    let mut r = VerificationReport::new(None, format!("shift theta={theta}"));
    let e1 = worst(&|l| down.value(l) - (m.value(l) - phi.value(l)));
    r.push(Check::abs(format!("shift.T_minus_theta=psi-phi_theta(theta={theta})"), 0.0, e1, ALGEBRAIC_TOL));
    let e2 = worst(&|l| up.value(l) - (m.value(l) + tphi.value(l)));
    r.push(Check::abs(format!("shift.T_theta=psi+tilde_phi_theta(theta={theta})"), 0.0, e2, ALGEBRAIC_TOL));
    let e3 = worst(&|l| up.value(l) - (m.value(theta + l) - m.value(theta)));
    r.push(Check::abs(format!("shift.T_theta_definition(theta={theta})"), 0.0, e3, ALGEBRAIC_TOL));
    if let Some((mc, x, points)) = law {
        let horizon = points.iter().fold(0.0f64, |h, &(t, _)| h.max(t));
        let mc =
            McSpec { scheme: if m.levy.is_zero() && m.beta > 0.0 { mc.scheme } else { Scheme::EulerDiffusion }, ..*mc };
        let ens = mc.simulate(m, &phi, x, horizon)?;
        let mut law = verify_theorem_main(m, &phi, x, &ens, points, mc.z_gate)?;
        for c in &mut law.checks {
            c.name = c.name.replacen("theorem.", "shift.law_", 1);
        }
        r.extend(law);
    }
    Ok(r)
}

/// Monotonicity, the upper bound `w̄` and the final gap for a sequence `w₀ … w_N`.
pub fn iteration_checks(ws: &[GridFunction<f64>], wbar: &GridFunction<f64>, tol: f64) -> VerificationReport {
    let mut probe: Vec<f64> = ws.iter().flat_map(|w| w.knots()).chain(wbar.knots()).collect();
    probe.sort_by(f64::total_cmp);
    probe.dedup();
    let mids: Vec<f64> = probe.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probe.extend(mids);
    let mut drop = 0.0f64;
    let mut over = 0.0f64;
    for (k, w) in ws.iter().enumerate() {
        for &s in &probe {
            if k > 0 {
                drop = drop.max(ws[k - 1].eval(s) - w.eval(s));
            }
            over = over.max(w.eval(s) - wbar.eval(s));
        }
    }
    let gap =
        ws.last().map_or(f64::INFINITY, |w| probe.iter().fold(0.0f64, |m, &s| m.max((w.eval(s) - wbar.eval(s)).abs())));
    let mut r = VerificationReport::new(None, format!("iteration N={}", ws.len().saturating_sub(1)));
    r.push(Check::abs("iteration.monotone_violation", 0.0, drop.max(0.0), ALGEBRAIC_TOL));
    r.push(Check::abs("iteration.bound_violation", 0.0, over.max(0.0), 10.0 * ALGEBRAIC_TOL));
    r.push(Check::at_most(format!("iteration.sup_gap(N={})", ws.len().saturating_sub(1)), gap, tol));
    r
}

/// Runs `iterate_wk` with `μ` at every level and compares with `w̄ = solve_w(ψ⁰ − φ, μ)`.
pub fn verify_iteration_convergence(
    psi0: &BranchingMechanism<f64>,
    phi: &ImmigrationMechanism<f64>,
    mu: &FiniteMeasureOnR<f64>,
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let psi = psi0.subtract_immigration(phi)?;
    let ws = iterate_wk(psi0, phi, &vec![mu.clone(); n + 1], 0.0)?;
    let wbar = solve_w(&psi, mu, 0.0)?;
    Ok(iteration_checks(&ws, &wbar, tol))
}

/// `E[e^{−λ₂Y⁰_u} | X_t > 0]` at each `t` against the `t → ∞` limit:
/// gaps must not grow and the last one must be `≤ tol`.
pub fn verify_conditional_limit(
    p: &QuadraticParams<f64>,
    lambda2: f64,
    u: f64,
    ts: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    if ts.is_empty() {
        return domain("verify_conditional_limit needs at least one t");
    }
    let lim = cond_laplace_limit(p, lambda2, u)?;
    let mut r = VerificationReport::new(
        None,
        format!("conditional_limit alpha={} theta={} u={u} lambda2={lambda2}", p.alpha, p.theta),
    );
    let gaps: Vec<f64> =
        ts.iter().map(|&t| cond_laplace_finite(p, lambda2, u, t).map(|v| (v - lim).abs())).collect::<Result<_>>()?;
    let growth = gaps.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    r.push(Check::abs("conditional.gap_growth", 0.0, growth.max(0.0), ALGEBRAIC_TOL));
    let t_last = ts[ts.len() - 1];
    let finite = cond_laplace_finite(p, lambda2, u, t_last)?;
    r.push(Check::abs(format!("conditional.limit_gap(t={t_last})"), lim, finite, tol));
    Ok(r)
}
