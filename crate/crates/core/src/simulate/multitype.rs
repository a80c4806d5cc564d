//! The immigration cascade `Y⁰, Y¹, …, Yⁿ` and `X⁽ⁿ⁾ = Σ Yᵏ`.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::single::{gamma, poisson, EulerKernel, ImmigrationKernel};
use super::{run_paths, PathEnsemble, PathGrid, PathOut, RngSpec, Scheme};
use crate::error::{domain, Error, Result};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::quadratic::g_func;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultitypeOptions {
    /// Highest type index `n`; types `0..=n` are simulated.
    pub n_types: usize,
    pub n_paths: usize,
    pub scheme: Scheme,
    /// Internal substeps per grid step (exact scheme only).
    pub substeps: usize,
    /// Store every `Yᵏ`, not only `Y⁰` and `X`.
    pub keep_types: bool,
}

impl MultitypeOptions {
    pub fn new(n_types: usize, n_paths: usize, scheme: Scheme) -> Self {
        Self { n_types, n_paths, scheme, substeps: 4, keep_types: false }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn keeping_types(mut self) -> Self {
        self.keep_types = true;
        self
    }
}

/// `(1 − e^{−z})/z`, 1 at `z = 0`.
fn q(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Per-substep constants of the exact quadratic cascade, in units where `β = 1`.
struct ExactStep {
    b: f64,
    abar: f64,
    dt: f64,
    /// `g(b,dt)`: own mass `Poisson(y/G)` families.
    g: f64,
    /// `e^{−b dt}g(b,dt)`: family size scale.
    s: f64,
    /// Mean number of surviving immigrant families per unit parent mass when the parent dies.
    j: f64,
    q_max: f64,
}

impl ExactStep {
    fn new(b: f64, abar: f64, dt: f64) -> Self {
        let g = g_func(b, dt);
        let z = b * dt;
        // (dt e^{z} − g)/(b g²) with the z → 0 limit dt²/(2g²)
        let k = if z.abs() < 1e-4 { 0.5 + z / 3.0 + z * z / 8.0 } else { (z.exp() - z.exp_m1() / z) / z };
        Self { b, abar, dt, g, s: (-z).exp() * g, j: dt * dt * k / (g * g), q_max: if b < 0.0 { q(z) } else { 1.0 } }
    }

    fn own<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        gamma(poisson(y / self.g, rng) as f64, self.s, rng)
    }

    /// Mass at the substep end coming from a parent that moved `yl → yr`.
    fn immigration<R: Rng + ?Sized>(&self, yl: f64, yr: f64, rng: &mut R) -> f64 {
        if yr > 0.0 {
            return gamma(self.abar * 0.5 * (yl + yr), self.s, rng);
        }
        if yl <= 0.0 {
            return 0.0;
        }
        let mut add = 0.0;
        for _ in 0..poisson(self.abar * yl * self.j, rng) {
            // age a at the substep end, density ∝ a·q(ba)
            let a = loop {
                let a = self.dt * rng.random::<f64>().sqrt();
                if rng.random::<f64>() * self.q_max <= q(self.b * a) {
                    break a;
                }
            };
            let mean = -(-self.b * a).exp_m1() / self.b;
            let mean = if mean.is_finite() && self.b != 0.0 { mean } else { a };
            add += Exp::new(1.0 / mean).expect("positive family mean").sample(rng);
        }
        add
    }
}

fn validate(
    psi0: &BranchingMechanism<f64>,
    phi: &ImmigrationMechanism<f64>,
    x: f64,
    opts: &MultitypeOptions,
) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return domain(format!("initial mass must be >= 0, got {x}"));
    }
    if opts.n_types < 1 {
        return domain("n_types must be >= 1");
    }
    if opts.substeps < 1 {
        return domain("substeps must be >= 1");
    }
    if !psi0.is_conservative() {
        return Err(Error::NonConservative("psi0 is not conservative".into()));
    }
    if !psi0.subtract_immigration(phi)?.is_conservative() {
        return Err(Error::NonConservative("psi0 - phi is not conservative".into()));
    }
    match opts.scheme {
        Scheme::ExactQuadratic if !(psi0.levy.is_zero() && psi0.beta > 0.0 && phi.nu.is_zero()) => Err(
            Error::IncompatibleScheme("exact_quadratic needs a Lévy-free psi0 with beta > 0 and a linear phi".into()),
        ),
        Scheme::GaltonWatson { .. } => {
            Err(Error::IncompatibleScheme("galton_watson is not available for the multitype cascade".into()))
        }
        _ => Ok(()),
    }
}

struct Recorder {
    x: Vec<f64>,
    y0: Vec<f64>,
    types: Option<Vec<Vec<f64>>>,
    last: Vec<f64>,
}

impl Recorder {
    fn new(m: usize, n: usize, keep: bool) -> Self {
        Self {
            x: Vec::with_capacity(m),
            y0: Vec::with_capacity(m),
            types: keep.then(|| vec![Vec::with_capacity(m); n + 1]),
            last: Vec::with_capacity(m),
        }
    }

    /// Records `scale·y`; `X` is the sum of the recorded components.
    fn push(&mut self, y: &[f64], scale: f64) {
        let mut total = 0.0;
        for (k, &v) in y.iter().enumerate() {
            let v = v * scale;
            total += v;
            if let Some(t) = self.types.as_mut() {
                t[k].push(v);
            }
        }
        self.x.push(total);
        self.y0.push(y[0] * scale);
        self.last.push(y[y.len() - 1] * scale);
    }

    fn finish(self, tau: Option<(f64, f64)>) -> PathOut {
        PathOut { x: self.x, y0: self.y0, types: self.types, last: Some(self.last), tau }
    }
}

/// Simulates the cascade from `Y⁰_0 = x`, `Yᵏ_0 = 0`.
///
/// The exact scheme works in units where `β = 1` and splits each grid step
/// into `substeps`; extinction times are kept at that finer resolution.
pub fn simulate_multitype(
    psi0: &BranchingMechanism<f64>,
    phi: &ImmigrationMechanism<f64>,
    x: f64,
    grid: PathGrid,
    opts: MultitypeOptions,
    rng_spec: RngSpec,
) -> Result<PathEnsemble> {
    validate(psi0, phi, x, &opts)?;
    let n = opts.n_types;
    let m = grid.len();
    match opts.scheme {
        Scheme::ExactQuadratic => {
            let beta = psi0.beta;
            let sub = opts.substeps;
            let dts = grid.dt / sub as f64;
            let st = ExactStep::new(psi0.alpha, phi.alpha_bar, dts);
            run_paths(grid, rng_spec, opts.scheme, opts.n_paths, |rng| {
                let mut rec = Recorder::new(m, n, opts.keep_types);
                let mut y = vec![0.0; n + 1];
                y[0] = x / beta;
                rec.push(&y, beta);
                let (mut tau_y0, mut tau_x) = (f64::INFINITY, f64::INFINITY);
                if x == 0.0 {
                    (tau_y0, tau_x) = (0.0, 0.0);
                }
                for i in 0..grid.n_steps {
                    for s in 0..sub {
                        let mut parent_old = 0.0;
                        let mut parent_new = 0.0;
                        let mut alive = false;
                        for (k, yk) in y.iter_mut().enumerate() {
                            let old = *yk;
                            let mut v = st.own(old, rng);
                            if k > 0 {
                                v += st.immigration(parent_old, parent_new, rng);
                            }
                            *yk = v;
                            alive |= v > 0.0;
                            (parent_old, parent_new) = (old, v);
                        }
                        let t = grid.time(i) + (s + 1) as f64 * dts;
                        if y[0] == 0.0 && tau_y0.is_infinite() {
                            tau_y0 = t;
                        }
                        if !alive && tau_x.is_infinite() {
                            tau_x = t;
                        }
                        if !alive {
                            break;
                        }
                    }
                    rec.push(&y, beta);
                }
                Ok(rec.finish(Some((tau_y0, tau_x))))
            })
        }
        _ => {
            let kern = EulerKernel::new(psi0);
            let imm = ImmigrationKernel::new(phi);
            let dt = grid.dt;
            run_paths(grid, rng_spec, opts.scheme, opts.n_paths, |rng| {
                let mut rec = Recorder::new(m, n, opts.keep_types);
                let mut y = vec![0.0; n + 1];
                y[0] = x;
                rec.push(&y, 1.0);
                for _ in 0..grid.n_steps {
                    let mut parent_old = 0.0;
                    for (k, yk) in y.iter_mut().enumerate() {
                        let old = *yk;
                        let mut v = kern.step(old, dt, rng);
                        if k > 0 {
                            v += imm.step(parent_old, dt, rng);
                        }
                        *yk = v;
                        parent_old = old;
                    }
                    rec.push(&y, 1.0);
                }
                Ok(rec.finish(None))
            })
        }
    }
}
