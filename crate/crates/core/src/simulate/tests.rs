use super::*;
use crate::error::Error;
use crate::laplace_ode::solve_u;
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism, LevyMeasure};
use crate::quadratic::{g_func, v0, QuadraticParams};
use rand::SeedableRng;

type M = BranchingMechanism<f64>;
type I = ImmigrationMechanism<f64>;

fn assert_z(est: MCEstimate, theory: f64, gate: f64) {
    let z = est.z(theory);
    assert!(z.abs() <= gate, "estimate {} ± {} vs theory {theory}: z = {z}", est.mean, est.stderr);
}

#[test]
fn grid_basics() {
    let g = PathGrid::covering(0.25, 2.0).unwrap();
    assert_eq!(g.n_steps, 8);
    assert_eq!(g.index_of(1.5).unwrap(), 6);
    assert!(g.index_of(1.3).is_err());
    assert!(g.index_of(2.25).is_err());
    assert!(PathGrid::covering(0.3, 1.0).is_err());
    assert!(PathGrid::new(0.0, 3).is_err());
}

#[test]
fn estimate_statistics() {
    let e = MCEstimate::from_samples([1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(e.mean, 2.5);
    assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    assert!(MCEstimate::from_samples([1.0]).is_err());
    let flat = MCEstimate::from_samples([0.5; 10]).unwrap();
    assert_eq!(flat.z(0.5), 0.0);
    assert_eq!(flat.z(0.6), f64::NEG_INFINITY);
}

#[test]
fn rng_streams_are_distinct_and_reproducible() {
    use rand::Rng;
    let s = RngSpec::new(7);
    let a: u64 = s.path_rng(3).random();
    let b: u64 = s.path_rng(3).random();
    let c: u64 = s.path_rng(4).random();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn quadratic_transition_law() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    assert_eq!(sample_quadratic_transition(0.3, 0.0, 1.0, &mut rng).unwrap(), 0.0);
    assert!(sample_quadratic_transition(0.3, -1.0, 1.0, &mut rng).is_err());
    let n = 100_000;
    let zeros = MCEstimate::from_samples((0..n).map(|_| {
        if sample_quadratic_transition(0.0, 1.0, 1.0, &mut rng).unwrap() == 0.0 {
            1.0
        } else {
            0.0
        }
    }))
    .unwrap();
    assert_z(zeros, (-1.0f64).exp(), 3.0);
    let mean = MCEstimate::from_samples((0..n).map(|_| sample_quadratic_transition(0.5, 1.0, 1.0, &mut rng).unwrap()))
        .unwrap();
    assert_z(mean, (-0.5f64).exp(), 3.0);
}

#[test]
fn beta_scaling_of_transition() {
    // ψ(u) = αu + βu²: P(Z_t = 0) = exp(−x/(β g(α,t)))
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let (a, b, x) = (0.4, 2.5, 3.0);
    let p = MCEstimate::from_samples((0..50_000).map(|_| {
        if sample_cb_quadratic(a, b, x, 1.0, &mut rng).unwrap() == 0.0 {
            1.0
        } else {
            0.0
        }
    }))
    .unwrap();
    assert_z(p, (-x / (b * g_func(a, 1.0))).exp(), 4.0);
}

#[test]
fn zero_start_is_absorbing() {
    let grid = PathGrid::new(0.1, 10).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for scheme in [Scheme::ExactQuadratic, Scheme::EulerDiffusion, Scheme::GaltonWatson { levels: 10 }] {
        let p = simulate_cb_path(&M::quadratic(0.5, 1.0), 0.0, &grid, scheme, &mut rng).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn incompatible_schemes_refused() {
    let grid = PathGrid::new(0.1, 10).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let jumpy = M::new(0.5, 1.0, LevyMeasure::exp_density(1.0, 2.0)).unwrap();
    for scheme in [Scheme::ExactQuadratic, Scheme::GaltonWatson { levels: 10 }] {
        assert!(matches!(simulate_cb_path(&jumpy, 1.0, &grid, scheme, &mut rng), Err(Error::IncompatibleScheme(_))));
    }
    let psi0 = M::quadratic(1.0, 1.0);
    let opts = MultitypeOptions::new(3, 10, Scheme::ExactQuadratic);
    let nu = I::new(0.5, LevyMeasure::exp_density(1.0, 2.0)).unwrap();
    assert!(matches!(
        simulate_multitype(&psi0, &nu, 1.0, grid, opts, RngSpec::new(1)),
        Err(Error::IncompatibleScheme(_))
    ));
}

#[test]
fn non_conservative_cascade_refused() {
    use crate::mechanisms::LevyTerm;
    let grid = PathGrid::new(0.1, 10).unwrap();
    let psi0 = M::new(0.0, 1.0, LevyMeasure::from_terms(vec![LevyTerm::tail(1.0, 0.5)])).unwrap();
    let opts = MultitypeOptions::new(3, 10, Scheme::EulerDiffusion);
    assert!(matches!(
        simulate_multitype(&psi0, &I::zero(), 1.0, grid, opts, RngSpec::new(1)),
        Err(Error::NonConservative(_))
    ));
}

fn laplace_theory(psi: &M, x: f64, t: f64, lambda: f64) -> f64 {
    (-x * solve_u(psi, t, lambda).unwrap()).exp()
}

#[test]
fn exact_scheme_matches_laplace() {
    let psi = M::quadratic(0.5, 1.0);
    let grid = PathGrid::covering(0.25, 1.0).unwrap();
    let ens = simulate_cb_ensemble(&psi, 1.0, grid, Scheme::ExactQuadratic, 100_000, RngSpec::new(3)).unwrap();
    let est = mc_laplace(&ens, 1.0, Selector::X { lambda: 1.0 }).unwrap();
    assert_z(est, laplace_theory(&psi, 1.0, 1.0, 1.0), 3.0);
}

#[test]
fn euler_and_galton_watson_agree_with_exact() {
    let psi = M::quadratic(0.5, 1.0);
    let n = 20_000;
    let fine = PathGrid::covering(1e-3, 1.0).unwrap();
    let exact = simulate_cb_ensemble(&psi, 1.0, fine, Scheme::ExactQuadratic, n, RngSpec::new(5)).unwrap();
    let euler = simulate_cb_ensemble(&psi, 1.0, fine, Scheme::EulerDiffusion, n, RngSpec::new(6)).unwrap();
    let coarse = PathGrid::covering(0.25, 1.0).unwrap();
    let gw = simulate_cb_ensemble(&psi, 1.0, coarse, Scheme::GaltonWatson { levels: 100 }, n, RngSpec::new(7)).unwrap();
    let sel = Selector::X { lambda: 1.0 };
    let a = mc_laplace(&exact, 1.0, sel).unwrap();
    for other in [&euler, &gw] {
        let b = mc_laplace(other, 1.0, sel).unwrap();
        let z = (a.mean - b.mean) / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!(z.abs() <= 4.0, "{} vs {}: z = {z}", a.mean, b.mean);
    }
}

#[test]
fn euler_with_jumps_matches_laplace() {
    let psi = M::new(0.3, 0.5, LevyMeasure::exp_density(1.0, 3.0)).unwrap();
    let grid = PathGrid::covering(1e-2, 1.0).unwrap();
    let ens = simulate_cb_ensemble(&psi, 1.0, grid, Scheme::EulerDiffusion, 20_000, RngSpec::new(8)).unwrap();
    let est = mc_laplace(&ens, 1.0, Selector::X { lambda: 1.0 }).unwrap();
    let z = est.z(laplace_theory(&psi, 1.0, 1.0, 1.0));
    assert!(z.abs() <= 4.0, "z = {z}");
}

#[test]
fn branching_property() {
    let psi = M::quadratic(0.5, 1.0);
    let grid = PathGrid::covering(0.5, 1.0).unwrap();
    let n = 50_000;
    let whole = simulate_cb_ensemble(&psi, 1.0, grid, Scheme::ExactQuadratic, n, RngSpec::new(20)).unwrap();
    let a = simulate_cb_ensemble(&psi, 0.4, grid, Scheme::ExactQuadratic, n, RngSpec::new(21)).unwrap();
    let b = simulate_cb_ensemble(&psi, 0.6, grid, Scheme::ExactQuadratic, n, RngSpec::new(22)).unwrap();
    let w = mc_laplace(&whole, 1.0, Selector::X { lambda: 1.0 }).unwrap();
    let s = MCEstimate::from_samples((0..n).map(|p| (-(a.x(p)[2] + b.x(p)[2])).exp())).unwrap();
    let z = (w.mean - s.mean) / (w.stderr.powi(2) + s.stderr.powi(2)).sqrt();
    assert!(z.abs() <= 4.0, "z = {z}");
}

fn quad_cascade(alpha: f64, theta: f64) -> (M, I) {
    (M::quadratic(alpha + 2.0 * theta, 1.0), I::linear(2.0 * theta))
}

#[test]
fn cascade_without_immigration_is_plain_cb() {
    let grid = PathGrid::covering(0.25, 1.0).unwrap();
    let opts = MultitypeOptions::new(3, 200, Scheme::ExactQuadratic).keeping_types();
    let ens = simulate_multitype(&M::quadratic(0.5, 1.0), &I::zero(), 1.0, grid, opts, RngSpec::new(1)).unwrap();
    for p in 0..ens.n_paths() {
        for k in 1..=3 {
            assert!(ens.y(k, p).unwrap().iter().all(|&v| v == 0.0));
        }
        assert_eq!(ens.x(p), ens.y0(p));
    }
}

#[test]
fn cascade_invariants() {
    let (psi0, phi) = quad_cascade(0.5, 0.5);
    let grid = PathGrid::covering(1.0 / 16.0, 1.0).unwrap();
    for scheme in [Scheme::ExactQuadratic, Scheme::EulerDiffusion] {
        let opts = MultitypeOptions::new(4, 500, scheme).keeping_types();
        let ens = simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(2)).unwrap();
        for p in 0..ens.n_paths() {
            for i in 0..grid.len() {
                let sum: f64 = (0..=4).map(|k| ens.y(k, p).unwrap()[i]).sum();
                assert_eq!(sum, ens.x(p)[i]);
                assert!((0..=4).all(|k| ens.y(k, p).unwrap()[i] >= 0.0));
                assert!(ens.y0(p)[i] <= ens.x(p)[i]);
            }
        }
        for (ty, tx) in ens.extinction_times(1e-12) {
            assert!(ty <= tx);
        }
        if let Some(fine) = ens.fine_extinction_times() {
            assert!(fine.iter().all(|(ty, tx)| ty <= tx));
        }
    }
}

#[test]
fn cascade_mean_matches_difference_mechanism() {
    let (psi0, phi) = quad_cascade(0.5, 0.5);
    let grid = PathGrid::covering(1.0 / 64.0, 1.0).unwrap();
    let opts = MultitypeOptions::new(12, 20_000, Scheme::ExactQuadratic);
    let ens = simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(9)).unwrap();
    let i = grid.index_of(1.0).unwrap();
    let mean = MCEstimate::from_samples((0..ens.n_paths()).map(|p| ens.x(p)[i])).unwrap();
    assert_z(mean, (-0.5f64).exp(), 3.0);
    let p = QuadraticParams::<f64>::new(0.5, 0.5, 1.0).unwrap();
    let pair = mc_laplace(&ens, 1.0, Selector::Pair { lambda1: 1.0, lambda2: 1.0 }).unwrap();
    assert_z(pair, (-v0(&p, 1.0, 1.0, 1.0).unwrap()).exp(), 4.0);
    let tr = ens.truncation().unwrap();
    assert!(tr.sup_tail_ratio <= 1e-3, "{tr:?}");
}

#[test]
fn euler_cascade_with_levy_immigration() {
    // ψ⁰ with exponential jumps, φ with exponential immigration; compare with ψ = ψ⁰ − φ
    let psi0 = M::new(1.0, 0.5, LevyMeasure::exp_density(1.0, 2.0)).unwrap();
    let phi = I::new(0.3, LevyMeasure::exp_density(0.5, 2.0)).unwrap();
    let psi = psi0.subtract_immigration(&phi).unwrap();
    let grid = PathGrid::covering(1e-2, 1.0).unwrap();
    let opts = MultitypeOptions::new(10, 20_000, Scheme::EulerDiffusion);
    let ens = simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(10)).unwrap();
    let est = mc_laplace(&ens, 1.0, Selector::X { lambda: 1.0 }).unwrap();
    let z = est.z(laplace_theory(&psi, 1.0, 1.0, 1.0));
    assert!(z.abs() <= 4.0, "z = {z}");
}

#[test]
fn determinism_across_thread_counts() {
    let (psi0, phi) = quad_cascade(0.5, 0.5);
    let grid = PathGrid::covering(0.125, 1.0).unwrap();
    let opts = MultitypeOptions::new(5, 300, Scheme::ExactQuadratic).keeping_types();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(99)).unwrap())
    };
    let (a, b) = (run(1), run(3));
    for p in 0..300 {
        assert_eq!(a.x(p), b.x(p));
        assert_eq!(a.y(5, p), b.y(5, p));
    }
    assert_eq!(a.fine_extinction_times(), b.fine_extinction_times());
}

#[test]
fn mc_laplace_edges() {
    let grid = PathGrid::covering(0.5, 1.0).unwrap();
    let ens =
        simulate_cb_ensemble(&M::quadratic(0.5, 1.0), 0.0, grid, Scheme::ExactQuadratic, 10, RngSpec::new(1)).unwrap();
    let e = mc_laplace(&ens, 1.0, Selector::X { lambda: 2.0 }).unwrap();
    assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    let live =
        simulate_cb_ensemble(&M::quadratic(0.5, 1.0), 1.0, grid, Scheme::ExactQuadratic, 10, RngSpec::new(1)).unwrap();
    assert_eq!(mc_laplace(&live, 0.5, Selector::Y0 { lambda: 0.0 }).unwrap().mean, 1.0);
    assert!(mc_laplace(&live, 0.7, Selector::X { lambda: 1.0 }).is_err());
    assert!(extinction_times(&ens, 0.0).iter().all(|&(a, b)| a == 0.0 && b == 0.0));
}

#[test]
fn extinction_probability_matches_formula() {
    let (psi0, phi) = quad_cascade(0.0, 0.5);
    let grid = PathGrid::covering(1.0 / 16.0, 1.0).unwrap();
    let opts = MultitypeOptions::new(8, 20_000, Scheme::ExactQuadratic);
    let ens = simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(4)).unwrap();
    let taus = ens.extinction_times(0.0);
    let est = mc_probability(taus.len(), |p| taus[p].1 <= 1.0).unwrap();
    assert_z(est, (-1.0f64).exp(), 3.0);
}

#[test]
fn csv_layout() {
    let grid = PathGrid::covering(0.5, 1.0).unwrap();
    let (psi0, phi) = quad_cascade(0.5, 0.5);
    let opts = MultitypeOptions::new(2, 2, Scheme::ExactQuadratic).keeping_types();
    let ens = simulate_multitype(&psi0, &phi, 1.0, grid, opts, RngSpec::new(1)).unwrap();
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path,t,Y0,Y1,Y2,X");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("0,0,1,0,0,1"));
    // full precision round trip
    let last: f64 = lines[6].rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(last, ens.x(1)[2]);
}
