use super::*;
use crate::mechanisms::{LevyMeasure, LevyTerm};
use approx::assert_relative_eq;
use proptest::prelude::*;

type M = BranchingMechanism<f64>;
type I = ImmigrationMechanism<f64>;
type Mu = FiniteMeasureOnR<f64>;

fn quad(alpha: f64) -> M {
    M::quadratic(alpha, 1.0)
}

/// u(t,λ) for ψ(u) = αu + u².
fn u_exact(alpha: f64, t: f64, lambda: f64) -> f64 {
    let g = if alpha == 0.0 { t } else { (alpha * t).exp_m1() / alpha };
    lambda * (-alpha * t).exp() / (1.0 + lambda * (-alpha * t).exp() * g)
}

fn log_tail_mech() -> M {
    M::new(0.0, 1.0, LevyMeasure::from_terms(vec![LevyTerm::tail(1.0, 1.0)])).unwrap()
}

fn explosive_mech() -> M {
    M::new(0.0, 1.0, LevyMeasure::from_terms(vec![LevyTerm::tail(1.0, 0.5)])).unwrap()
}

#[test]
fn solve_u_examples() {
    assert_eq!(solve_u(&quad(0.7), 2.0, 0.0).unwrap(), 0.0);
    let e = (-1.0f64).exp();
    assert_relative_eq!(solve_u(&quad(1.0), 1.0, 1.0).unwrap(), e / (1.0 + (1.0 - e)), max_relative = 1e-9);
    for &t in &[0.5, 3.0, 10.0] {
        assert_relative_eq!(solve_u(&quad(-1.0), t, 1.0).unwrap(), 1.0, max_relative = 1e-12);
    }
    assert!(matches!(solve_u(&explosive_mech(), 1.0, 1.0), Err(Error::NonConservative(_))));
    assert!(solve_u(&quad(0.5), -1.0, 1.0).is_err());
}

#[test]
fn solve_u_inverse_examples() {
    let psi = quad(0.5);
    let a = solve_u(&psi, 1.0, 1.0).unwrap();
    let b = solve_u_inverse(&psi, 1.0, 1.0).unwrap();
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    assert_eq!(solve_u_inverse(&psi, 0.0, 2.5).unwrap(), 2.5);
    // below the positive root of a supercritical ψ, u climbs towards the root
    let sup = quad(-1.0);
    let mut prev = 0.3;
    for &t in &[0.1, 0.5, 1.0, 2.0, 5.0] {
        let v = solve_u_inverse(&sup, t, 0.3).unwrap();
        assert!(v > prev && v < 1.0);
        assert!((v - solve_u(&sup, t, 0.3).unwrap()).abs() < 1e-8);
        prev = v;
    }
    // and above the root it decays towards it
    let v = solve_u_inverse(&sup, 1.0, 3.0).unwrap();
    assert!((v - solve_u(&sup, 1.0, 3.0).unwrap()).abs() < 1e-8);
}

#[test]
fn solve_u_on_levy_mechanism() {
    let psi =
        M::new(0.4, 0.5, LevyMeasure::from_terms(vec![LevyTerm::Exp { c: 1.0, rho: 2.0 }, LevyTerm::stable(0.3, 1.5)]))
            .unwrap();
    let a = solve_u(&psi, 1.5, 2.0).unwrap();
    let b = solve_u_inverse(&psi, 1.5, 2.0).unwrap();
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    // ψ'(0+) = −∞ but Grey's condition holds: solvable
    let c = solve_u(&log_tail_mech(), 1.0, 0.5).unwrap();
    assert!(c.is_finite() && c > 0.0);
}

#[test]
fn solve_w_dirac_matches_u() {
    let psi = quad(0.5);
    let (t, lam) = (2.0, 1.5);
    let w = solve_w(&psi, &Mu::dirac(t, lam).unwrap(), 0.0).unwrap();
    for &s in &[0.0, 0.3, 1.0, 1.7, 2.0] {
        assert!((w.eval(s) - u_exact(0.5, t - s, lam)).abs() < 1e-9, "s={s}");
    }
    assert_eq!(w.eval(2.0 + 1e-9), 0.0);
    assert!(solve_w(&psi, &Mu::zero(), 0.0).unwrap().is_empty());
    assert_eq!(solve_w(&psi, &Mu::zero(), 0.0).unwrap().eval(0.5), 0.0);
}

#[test]
fn solve_w_two_atoms_compose() {
    let psi = M::new(0.2, 0.6, LevyMeasure::exp_density(1.0, 2.0)).unwrap();
    let (t1, t2, l1, l2) = (1.0, 2.5, 0.7, 1.3);
    let mu = Mu::new(vec![(t1, l1), (t2, l2)], vec![]).unwrap();
    let w = solve_w(&psi, &mu, 0.0).unwrap();
    let inner = solve_u(&psi, t2 - t1, l2).unwrap();
    for &s in &[0.0, 0.4, 0.99] {
        let want = solve_u(&psi, t1 - s, l1 + inner).unwrap();
        assert!((w.eval(s) - want).abs() < 1e-8, "s={s}");
    }
    // left-continuous at the lower atom
    assert!((w.eval(t1) - (l1 + inner)).abs() < 1e-8);
    assert!((w.eval(t1 + 1e-12) - inner).abs() < 1e-8);
}

#[test]
fn solve_w_refusals() {
    let density_only = Mu::new(vec![], vec![(0.0, 1.0, 0.5)]).unwrap();
    assert!(matches!(solve_w(&log_tail_mech(), &density_only, 0.0), Err(Error::Uniqueness(_))));
    assert!(solve_w(&log_tail_mech(), &Mu::dirac(1.0, 0.5).unwrap(), 0.0).is_ok());
    assert!(matches!(solve_w(&explosive_mech(), &Mu::dirac(1.0, 0.5).unwrap(), 0.0), Err(Error::NonConservative(_))));
}

#[test]
fn solve_w_with_density() {
    // μ = r·1_{[0,T)}: w' = ψ(w) − r backwards from w(T) = 0
    let psi = quad(0.5);
    let mu = Mu::new(vec![], vec![(0.0, 1.0, 0.8)]).unwrap();
    let solver = LaplaceSolver::default();
    let w = solver.solve_w(&psi, &mu, -0.5).unwrap();
    assert!(solver.residual(&psi, &w, &mu) <= 10.0 * w.solver_tol);
    assert!(w.eval(-0.5) > 0.0);
    assert!((w.eval(-0.5) - solve_u(&psi, 0.5, w.eval(0.0)).unwrap()).abs() < 1e-8);
}

#[test]
fn residual_examples() {
    let psi = quad(0.5);
    let mu = Mu::dirac(1.0, 1.0).unwrap();
    let solver = LaplaceSolver::default();
    let w = solver.solve_w(&psi, &mu, 0.0).unwrap();
    assert!(solver.residual(&psi, &w, &mu) < 1e-9);
    assert_eq!(solver.residual(&psi, &GridFunction::zero(), &Mu::zero()), 0.0);
    let bad = w.offset(0.1);
    assert!(solver.residual(&psi, &bad, &mu) >= 0.1 * (1.0 - 1e-6));
}

#[test]
fn cbi_laplace_examples() {
    let psi = quad(0.5);
    let phi = I::linear(0.8);
    let mu = Mu::dirac(1.5, 1.0).unwrap();
    let (x, s) = (1.3, 0.0);
    let plain = (-x * solve_w(&psi, &mu, s).unwrap().eval(s)).exp();
    let zero_h = GridFunction::constant(0.0);
    assert!((cbi_laplace(&psi, &phi, &zero_h, &mu, x, s).unwrap() - plain).abs() < 1e-9);
    let one = GridFunction::constant(1.0);
    assert!((cbi_laplace(&psi, &I::zero(), &one, &mu, x, s).unwrap() - plain).abs() < 1e-9);
    // constant immigration ᾱ: ∫₀ᵗ ᾱ u(v,λ) dv = ᾱ ln(1 + λ(1 − e^{−αt})/α)
    let (a, t, lam) = (0.5f64, 1.5f64, 1.0f64);
    let want = (-x * u_exact(a, t, lam)).exp() * (1.0 + lam * (1.0 - (-a * t).exp()) / a).powf(-0.8);
    assert!((cbi_laplace(&psi, &phi, &one, &mu, x, s).unwrap() - want).abs() < 1e-9);
    // a piecewise-linear rate that vanishes after t = 1
    let ramp = GridFunction::from_points(&[(0.0, 1.0), (1.0, 0.0)], Beyond::Zero).unwrap();
    let v = cbi_laplace(&psi, &phi, &ramp, &mu, x, s).unwrap();
    assert!(v > want && v < plain);
}

#[test]
fn iterate_wk_decoupled_without_immigration() {
    let psi0 = quad(1.5);
    let mus = vec![
        Mu::dirac(1.0, 2.0).unwrap(),
        Mu::dirac(0.5, 1.0).unwrap(),
        Mu::new(vec![(1.2, 0.3)], vec![(0.0, 1.0, 0.4)]).unwrap(),
    ];
    let ws = iterate_wk(&psi0, &I::zero(), &mus, 0.0).unwrap();
    for (k, w) in ws.iter().enumerate() {
        let direct = solve_w(&psi0, &mus[mus.len() - 1 - k], 0.0).unwrap();
        assert!(sup_gap(w, &direct) < 1e-8, "k={k}");
    }
}

#[test]
fn iterate_wk_monotone_and_stable_in_n() {
    let (alpha, theta) = (0.5, 0.5);
    let psi0 = quad(alpha + 2.0 * theta);
    let phi = I::linear(2.0 * theta);
    let mu = Mu::dirac(1.0, 1.0).unwrap();
    let ws = iterate_wk(&psi0, &phi, &vec![mu.clone(); 8], 0.0).unwrap();
    for k in 1..ws.len() {
        for &s in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            assert!(ws[k].eval(s) >= ws[k - 1].eval(s) - 1e-12);
        }
    }
    let short = iterate_wk(&psi0, &phi, &vec![mu.clone(); 4], 0.0).unwrap();
    for k in 0..4 {
        assert!(sup_gap(&short[k], &ws[k]) < 1e-9);
    }
    // bounded by the ψ⁰ − φ solution
    let psi = psi0.subtract_immigration(&phi).unwrap();
    let bar = solve_w(&psi, &mu, 0.0).unwrap();
    assert!(ws.iter().all(|w| w.eval(0.0) <= bar.eval(0.0) + 1e-10));
}

#[test]
fn iterate_wk_converges_to_joint_law() {
    let (alpha, theta, l1, l2, t) = (0.5, 0.5, 1.0, 1.0, 1.0);
    let psi0 = quad(alpha + 2.0 * theta);
    let phi = I::linear(2.0 * theta);
    let mut mus = vec![Mu::dirac(t, l1 + l2).unwrap()];
    mus.extend(std::iter::repeat_n(Mu::dirac(t, l1).unwrap(), 30));
    let ws = iterate_wk(&psi0, &phi, &mus, 0.0).unwrap();
    let (w0, _) = solve_joint_pair(&psi0, &phi, t, l1, l2).unwrap();
    assert!((ws.last().unwrap().eval(0.0) - w0).abs() < 1e-6);
}

#[test]
fn joint_pair_examples() {
    let (alpha, theta) = (0.5, 0.25);
    let psi0 = quad(alpha + 2.0 * theta);
    let phi = I::linear(2.0 * theta);
    let (w0, ws0) = solve_joint_pair(&psi0, &phi, 1.5, 0.8, 0.0).unwrap();
    let u = u_exact(alpha, 1.5, 0.8);
    assert!((w0 - u).abs() < 1e-9 && (ws0 - u).abs() < 1e-9);
    let (w0, _) = solve_joint_pair(&psi0, &I::zero(), 1.5, 0.8, 0.6).unwrap();
    assert!((w0 - u_exact(alpha + 2.0 * theta, 1.5, 1.4)).abs() < 1e-9);
    // λ₁ = 0: Y⁰-marginal λ₂e^{−bt}/(1 + λ₂(1 − e^{−bt})/b)
    let b: f64 = alpha + 2.0 * theta;
    let (w0, ws0) = solve_joint_pair(&psi0, &phi, 2.0, 0.0, 1.7).unwrap();
    assert_eq!(ws0, 0.0);
    let want = 1.7 * (-b * 2.0).exp() / (1.0 + 1.7 * (1.0 - (-b * 2.0).exp()) / b);
    assert!((w0 - want).abs() < 1e-9);
}

#[test]
fn joint_pair_residuals() {
    let psi0 = quad(1.0);
    let phi = I::linear(0.5);
    let solver = LaplaceSolver::default();
    let (w, ws) = solver.joint_pair_functions(&psi0, &phi, 1.0, 1.0, 1.0).unwrap();
    let psi = psi0.subtract_immigration(&phi).unwrap();
    let tol = w.solver_tol;
    assert!(solver.residual(&psi, &ws, &Mu::dirac(1.0, 1.0).unwrap()) <= 10.0 * tol);
    let r = solver.residual_with_source(&psi0, &w, &Mu::dirac(1.0, 2.0).unwrap(), |s| phi.value(ws.eval(s)));
    assert!(r <= 10.0 * tol, "{r}");
}

#[test]
fn two_times_examples() {
    let psi0 = quad(1.0);
    let phi = I::linear(0.5);
    let (t, l1, l2) = (1.0, 0.7, 1.2);
    let (pair, _) = solve_joint_pair(&psi0, &phi, t, l1, l2).unwrap();
    let near = solve_joint_two_times(&psi0, &phi, t - 1e-7, t, l1, l2).unwrap();
    assert!((near - pair).abs() < 1e-6);
    let psi = psi0.subtract_immigration(&phi).unwrap();
    let m = solve_joint_two_times(&psi0, &phi, 0.4, t, l1, 0.0).unwrap();
    assert!((m - solve_u(&psi, t, l1).unwrap()).abs() < 1e-9);
    assert!(solve_joint_two_times(&psi0, &phi, 1.0, 1.0, l1, l2).is_err());
    // u = 0: Y⁰₀ = x, so the exponent just gains λ₂
    let z = solve_joint_two_times(&psi0, &phi, 0.0, t, l1, l2).unwrap();
    assert!((z - solve_u(&psi, t, l1).unwrap() - l2).abs() < 1e-9);
}

#[test]
fn generic_over_f32() {
    let psi = BranchingMechanism::<f32>::quadratic(1.0, 1.0);
    let v = LaplaceSolver::<f32>::default().solve_u(&psi, 1.0, 1.0).unwrap();
    let e = (-1.0f32).exp();
    assert!((v - e / (2.0 - e)).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flow_property(alpha in -0.5..1.5f64, s in 0.0..2.0f64, t in 0.0..2.0f64, lam in 0.0..5.0f64) {
        let psi = M::new(alpha, 0.8, LevyMeasure::exp_density(0.5, 1.5)).unwrap();
        let lhs = solve_u(&psi, s + t, lam).unwrap();
        let rhs = solve_u(&psi, t, solve_u(&psi, s, lam).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8);
    }

    #[test]
    fn monotone_in_lambda_and_t(alpha in 0.0..1.5f64, t in 0.01..3.0f64, dt in 0.01..1.0f64, lam in 0.01..5.0f64, dl in 0.01..1.0f64) {
        let psi = M::new(alpha, 1.0, LevyMeasure::atom(0.7, 0.4)).unwrap();
        let u = solve_u(&psi, t, lam).unwrap();
        prop_assert!(u <= lam + 1e-12);
        prop_assert!(solve_u(&psi, t, lam + dl).unwrap() >= u - 1e-12);
        prop_assert!(solve_u(&psi, t + dt, lam).unwrap() <= u + 1e-12);
    }

    #[test]
    fn cross_method(alpha in 0.0..1.5f64, t in 0.01..3.0f64, lam in 0.05..5.0f64) {
        let psi = M::new(alpha, 0.7, LevyMeasure::exp_density(1.0, 2.0)).unwrap();
        let a = solve_u(&psi, t, lam).unwrap();
        let b = solve_u_inverse(&psi, t, lam).unwrap();
        prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn residual_within_tolerance(alpha in 0.0..1.5f64, t in 0.1..3.0f64, lam in 0.0..5.0f64, rate in 0.0..2.0f64) {
        let psi = M::new(alpha, 1.0, LevyMeasure::exp_density(0.5, 1.0)).unwrap();
        let mu = Mu::new(vec![(t, lam + 0.01), (0.5 * t, 0.3)], vec![(0.0, t, rate)]).unwrap();
        let solver = LaplaceSolver::default();
        let w = solver.solve_w(&psi, &mu, 0.0).unwrap();
        prop_assert!(solver.residual(&psi, &w, &mu) <= 10.0 * w.solver_tol);
    }
}
