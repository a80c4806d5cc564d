//! Single-type CB paths.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::jumps::{first_moment_between, small_jump_mean, JumpTable};
use super::{run_paths, PathEnsemble, PathGrid, PathOut, RngSpec, Scheme, SMALL_JUMP};
use crate::error::{domain, Error, Result};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::quadratic::g_func;

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive Poisson mean").sample(rng) as u64
}

pub(crate) fn gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale).expect("positive Gamma parameters").sample(rng)
}

/// Exact draw of `Z_dt` given `Z_0 = x` for `ψ(u) = αu + βu²`.
pub fn sample_cb_quadratic<R: Rng + ?Sized>(alpha: f64, beta: f64, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
    if !(x >= 0.0) {
        return domain(format!("initial mass must be >= 0, got {x}"));
    }
    if !(dt > 0.0 && beta > 0.0) {
        return domain(format!("need dt > 0 and beta > 0, got dt = {dt}, beta = {beta}"));
    }
    let g = g_func(alpha, dt);
    let n = poisson(x / (beta * g), rng);
    Ok(gamma(n as f64, beta * (-alpha * dt).exp() * g, rng))
}

/// Exact draw of `Z_dt` for `ψ(u) = αu + u²`.
pub fn sample_quadratic_transition<R: Rng + ?Sized>(alpha: f64, x: f64, dt: f64, rng: &mut R) -> Result<f64> {
    sample_cb_quadratic(alpha, 1.0, x, dt, rng)
}

/// One step of a CB: the drift and Feller part exactly, then tabulated jumps `≥ SMALL_JUMP`
/// driven by the mass at the start of the step.
pub(crate) struct EulerKernel {
    /// Coefficient of `Z` in the drift, `−α − ∫_{[δ,1]} ℓπ(dℓ)`.
    rate: f64,
    beta: f64,
    jumps: JumpTable,
}

impl EulerKernel {
    pub fn new(psi: &BranchingMechanism<f64>) -> Self {
        let comp = first_moment_between(&psi.levy, SMALL_JUMP, 1.0);
        Self { rate: -psi.alpha - comp, beta: psi.beta, jumps: JumpTable::new(&psi.levy, SMALL_JUMP) }
    }

    pub fn step<R: Rng + ?Sized>(&self, z: f64, dt: f64, rng: &mut R) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let mut next = if self.beta > 0.0 {
            let g = g_func(-self.rate, dt);
            gamma(poisson(z / (self.beta * g), rng) as f64, self.beta * (self.rate * dt).exp() * g, rng)
        } else {
            z * (self.rate * dt).exp()
        };
        for _ in 0..poisson(z * dt * self.jumps.total, rng) {
            next += self.jumps.sample(rng);
        }
        next
    }
}

/// Immigration driven by a parent mass over one step: drift plus atoms `≥ SMALL_JUMP`.
pub(crate) struct ImmigrationKernel {
    rate: f64,
    atoms: JumpTable,
}

impl ImmigrationKernel {
    pub fn new(phi: &ImmigrationMechanism<f64>) -> Self {
        let small = small_jump_mean(&phi.nu, SMALL_JUMP);
        Self { rate: phi.alpha_bar + small, atoms: JumpTable::new(&phi.nu, SMALL_JUMP) }
    }

    pub fn step<R: Rng + ?Sized>(&self, parent: f64, dt: f64, rng: &mut R) -> f64 {
        if parent <= 0.0 {
            return 0.0;
        }
        let mut add = self.rate * parent * dt;
        for _ in 0..poisson(parent * dt * self.atoms.total, rng) {
            add += self.atoms.sample(rng);
        }
        add
    }
}

/// Binary branching with `levels` individuals per unit mass, run exactly between grid times.
struct GaltonWatson {
    rate: f64,
    p_death: f64,
    levels: f64,
}

impl GaltonWatson {
    fn new(psi: &BranchingMechanism<f64>, levels: u32) -> Result<Self> {
        if !psi.levy.is_zero() || psi.beta <= 0.0 {
            return Err(Error::IncompatibleScheme("galton_watson needs a Lévy-free mechanism with beta > 0".into()));
        }
        if levels == 0 {
            return Err(Error::IncompatibleScheme("galton_watson needs levels >= 1".into()));
        }
        let k = levels as f64;
        let rate = 2.0 * psi.beta * k;
        if psi.alpha.abs() > rate {
            return Err(Error::IncompatibleScheme(format!(
                "galton_watson needs |alpha| <= 2 beta levels = {rate}, raise levels"
            )));
        }
        Ok(Self { rate, p_death: 0.5 * (1.0 + psi.alpha / rate), levels: k })
    }

    fn step<R: Rng + ?Sized>(&self, n: u64, dt: f64, rng: &mut R) -> u64 {
        let (mut n, mut t) = (n, 0.0);
        while n > 0 {
            t += -rng.random::<f64>().ln() / (n as f64 * self.rate);
            if t > dt {
                break;
            }
            if rng.random::<f64>() < self.p_death {
                n -= 1;
            } else {
                n += 1;
            }
        }
        n
    }
}

fn check_scheme(psi: &BranchingMechanism<f64>, scheme: Scheme) -> Result<()> {
    if scheme == Scheme::ExactQuadratic && !(psi.levy.is_zero() && psi.beta > 0.0) {
        return Err(Error::IncompatibleScheme("exact_quadratic needs a Lévy-free mechanism with beta > 0".into()));
    }
    Ok(())
}

/// One CB(ψ) path on `grid` started from `x`.
pub fn simulate_cb_path<R: Rng + ?Sized>(
    psi: &BranchingMechanism<f64>,
    x: f64,
    grid: &PathGrid,
    scheme: Scheme,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(x >= 0.0 && x.is_finite()) {
        return domain(format!("initial mass must be >= 0, got {x}"));
    }
    check_scheme(psi, scheme)?;
    let dt = grid.dt;
    let mut path = Vec::with_capacity(grid.len());
    path.push(x);
    match scheme {
        Scheme::ExactQuadratic => {
            let mut z = x;
            for _ in 0..grid.n_steps {
                if z > 0.0 {
                    z = sample_cb_quadratic(psi.alpha, psi.beta, z, dt, rng)?;
                }
                path.push(z);
            }
        }
        Scheme::EulerDiffusion => {
            let k = EulerKernel::new(psi);
            let mut z = x;
            for _ in 0..grid.n_steps {
                z = k.step(z, dt, rng);
                path.push(z);
            }
        }
        Scheme::GaltonWatson { levels } => {
            let gw = GaltonWatson::new(psi, levels)?;
            let mut n = (x * gw.levels).round() as u64;
            path[0] = n as f64 / gw.levels;
            for _ in 0..grid.n_steps {
                n = gw.step(n, dt, rng);
                path.push(n as f64 / gw.levels);
            }
        }
    }
    Ok(path)
}

/// `n_paths` independent CB(ψ) paths; stored as a one-type ensemble (`Y⁰ = X`).
pub fn simulate_cb_ensemble(
    psi: &BranchingMechanism<f64>,
    x: f64,
    grid: PathGrid,
    scheme: Scheme,
    n_paths: usize,
    rng_spec: RngSpec,
) -> Result<PathEnsemble> {
    check_scheme(psi, scheme)?;
    run_paths(grid, rng_spec, scheme, n_paths, |rng| {
        let p = simulate_cb_path(psi, x, &grid, scheme, rng)?;
        Ok(PathOut { x: p.clone(), y0: p, types: None, last: None, tau: None })
    })
}
