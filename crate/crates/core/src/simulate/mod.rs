//! Path simulation and Monte Carlo estimators (f64 only).

mod jumps;
mod multitype;
mod single;

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use multitype::{simulate_multitype, MultitypeOptions};
pub use single::{sample_cb_quadratic, sample_quadratic_transition, simulate_cb_ensemble, simulate_cb_path};

/// Jumps below this size are folded into drift terms by the Euler schemes.
pub const SMALL_JUMP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl PathGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("grid step must be > 0, got {dt}"));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid reaching `horizon` with step `dt`; `horizon/dt` must be an integer.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        let n = (horizon / dt).round();
        if !(n >= 0.0) || (n * dt - horizon).abs() > 1e-9 * dt.max(horizon) {
            return domain(format!("horizon {horizon} is not a multiple of dt = {dt}"));
        }
        Self::new(dt, n as usize)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Index of `t` on the grid, or a domain error when `t` is off-grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = (t / self.dt).round();
        if i >= 0.0 && (i as usize) < self.len() && (i * self.dt - t).abs() <= 1e-9 * self.dt.max(t.abs()) {
            Ok(i as usize)
        } else {
            domain(format!("t = {t} is not on the grid (dt = {}, n_steps = {})", self.dt, self.n_steps))
        }
    }
}

/// Path `i` uses ChaCha8 seeded from `seed`, on stream `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn path_rng(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExactQuadratic,
    EulerDiffusion,
    GaltonWatson { levels: u32 },
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::ExactQuadratic => write!(f, "exact_quadratic"),
            Scheme::EulerDiffusion => write!(f, "euler_diffusion"),
            Scheme::GaltonWatson { levels } => write!(f, "galton_watson({levels})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl MCEstimate {
    /// Sample mean and `sd/√n` with the unbiased sample variance.
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Result<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for v in samples {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        if n < 2 {
            return domain(format!("an estimate needs at least 2 samples, got {n}"));
        }
        let var = (m2 / (n - 1) as f64).max(0.0);
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), n_samples: n })
    }

    /// `(mean − theory)/stderr`; 0 or ±∞ when the stderr vanishes.
    pub fn z(&self, theory: f64) -> f64 {
        let d = self.mean - theory;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d.abs() <= 1e-12 * theory.abs().max(1.0) {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

/// What `mc_laplace` averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    X {
        lambda: f64,
    },
    Y0 {
        lambda: f64,
    },
    /// `e^{−λ₁X_t − λ₂Y⁰_t}`.
    Pair {
        lambda1: f64,
        lambda2: f64,
    },
    /// `e^{−λ₁X_t − λ₂Y⁰_u}`.
    PairAt {
        lambda1: f64,
        lambda2: f64,
        u: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationDiagnostic {
    /// `sup_t E[Yⁿ_t]` for the last simulated type.
    pub sup_tail_mean: f64,
    /// `sup_t E[Yⁿ_t]/E[X_t]` over times with `E[X_t] > 0`.
    pub sup_tail_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: PathGrid,
    pub rng_spec: RngSpec,
    pub scheme: Scheme,
    n_paths: usize,
    x: Vec<f64>,
    y0: Vec<f64>,
    types: Option<Vec<Vec<f64>>>,
    tail_mean: Option<Vec<f64>>,
    fine_tau: Option<Vec<(f64, f64)>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of stored type components `Y⁰..Yⁿ`, when they were kept.
    pub fn n_types(&self) -> Option<usize> {
        self.types.as_ref().map(|t| t.len())
    }

    fn row<'a>(&self, v: &'a [f64], path: usize) -> &'a [f64] {
        let m = self.grid.len();
        &v[path * m..(path + 1) * m]
    }

    pub fn x(&self, path: usize) -> &[f64] {
        self.row(&self.x, path)
    }

    pub fn y0(&self, path: usize) -> &[f64] {
        self.row(&self.y0, path)
    }

    pub fn y(&self, k: usize, path: usize) -> Option<&[f64]> {
        self.types.as_ref().and_then(|t| t.get(k)).map(|v| self.row(v, path))
    }

    pub fn truncation(&self) -> Option<TruncationDiagnostic> {
        let tail = self.tail_mean.as_ref()?;
        let n = self.n_paths as f64;
        let (mut sup, mut ratio) = (0.0f64, 0.0f64);
        for (i, &tm) in tail.iter().enumerate() {
            sup = sup.max(tm);
            let mx = (0..self.n_paths).map(|p| self.x(p)[i]).sum::<f64>() / n;
            if mx > 0.0 {
                ratio = ratio.max(tm / mx);
            }
        }
        Some(TruncationDiagnostic { sup_tail_mean: sup, sup_tail_ratio: ratio })
    }

    /// Extinction times recorded at the internal substep resolution, if any.
    pub fn fine_extinction_times(&self) -> Option<&[(f64, f64)]> {
        self.fine_tau.as_deref()
    }

    /// Per-path `(τ_{Y⁰}, τ_X)`: first grid time after which the component
    /// stays `≤ eps`; `+∞` if it never does.
    pub fn extinction_times(&self, eps: f64) -> Vec<(f64, f64)> {
        let first = |v: &[f64]| -> f64 {
            match v.iter().rposition(|&z| z > eps) {
                None => self.grid.time(0),
                Some(i) if i + 1 < v.len() => self.grid.time(i + 1),
                Some(_) => f64::INFINITY,
            }
        };
        (0..self.n_paths).map(|p| (first(self.y0(p)), first(self.x(p)))).collect()
    }

    /// CSV with header `path,t,Y0,Y1,...,X` (only `Y0` when types were not kept).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let k = self.n_types().unwrap_or(1);
        write!(w, "path,t")?;
        for j in 0..k {
            write!(w, ",Y{j}")?;
        }
        writeln!(w, ",X")?;
        for p in 0..self.n_paths {
            for i in 0..self.grid.len() {
                write!(w, "{p},{}", self.grid.time(i))?;
                for j in 0..k {
                    let v = self.y(j, p).map_or(self.y0(p)[i], |r| r[i]);
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",{}", self.x(p)[i])?;
            }
        }
        Ok(())
    }
}

/// One simulated path as returned by the per-path workers.
pub(crate) struct PathOut {
    pub x: Vec<f64>,
    pub y0: Vec<f64>,
    pub types: Option<Vec<Vec<f64>>>,
    pub last: Option<Vec<f64>>,
    pub tau: Option<(f64, f64)>,
}

pub(crate) fn run_paths<F>(
    grid: PathGrid,
    rng_spec: RngSpec,
    scheme: Scheme,
    n_paths: usize,
    f: F,
) -> Result<PathEnsemble>
where
    F: Fn(&mut ChaCha8Rng) -> Result<PathOut> + Sync,
{
    if n_paths < 1 {
        return domain("n_paths must be >= 1");
    }
    let outs: Vec<PathOut> =
        (0..n_paths).into_par_iter().map(|p| f(&mut rng_spec.path_rng(p as u64))).collect::<Result<_>>()?;
    let m = grid.len();
    let mut x = Vec::with_capacity(n_paths * m);
    let mut y0 = Vec::with_capacity(n_paths * m);
    let k = outs[0].types.as_ref().map(|t| t.len());
    let mut types = k.map(|k| vec![Vec::with_capacity(n_paths * m); k]);
    let mut tail = outs[0].last.as_ref().map(|_| vec![0.0; m]);
    let mut tau = outs[0].tau.map(|_| Vec::with_capacity(n_paths));
    for o in outs {
        x.extend_from_slice(&o.x);
        y0.extend_from_slice(&o.y0);
        if let (Some(ts), Some(ot)) = (types.as_mut(), o.types) {
            for (dst, src) in ts.iter_mut().zip(ot) {
                dst.extend_from_slice(&src);
            }
        }
        if let (Some(tm), Some(last)) = (tail.as_mut(), o.last) {
            for (a, b) in tm.iter_mut().zip(last) {
                *a += b;
            }
        }
        if let (Some(t), Some(v)) = (tau.as_mut(), o.tau) {
            t.push(v);
        }
    }
    if let Some(tm) = tail.as_mut() {
        tm.iter_mut().for_each(|v| *v /= n_paths as f64);
    }
    Ok(PathEnsemble { grid, rng_spec, scheme, n_paths, x, y0, types, tail_mean: tail, fine_tau: tau })
}

/// Monte Carlo estimate of a Laplace functional at grid time `t`.
pub fn mc_laplace(ens: &PathEnsemble, t: f64, sel: Selector) -> Result<MCEstimate> {
    let i = ens.grid.index_of(t)?;
    let n = ens.n_paths();
    match sel {
        Selector::X { lambda } => MCEstimate::from_samples((0..n).map(|p| (-lambda * ens.x(p)[i]).exp())),
        Selector::Y0 { lambda } => MCEstimate::from_samples((0..n).map(|p| (-lambda * ens.y0(p)[i]).exp())),
        Selector::Pair { lambda1, lambda2 } => {
            MCEstimate::from_samples((0..n).map(|p| (-lambda1 * ens.x(p)[i] - lambda2 * ens.y0(p)[i]).exp()))
        }
        Selector::PairAt { lambda1, lambda2, u } => {
            let j = ens.grid.index_of(u)?;
            MCEstimate::from_samples((0..n).map(|p| (-lambda1 * ens.x(p)[i] - lambda2 * ens.y0(p)[j]).exp()))
        }
    }
}

/// Monte Carlo probability of an event given as a per-path indicator.
pub fn mc_probability<F: Fn(usize) -> bool>(n_paths: usize, event: F) -> Result<MCEstimate> {
    MCEstimate::from_samples((0..n_paths).map(|p| if event(p) { 1.0 } else { 0.0 }))
}

pub fn extinction_times(ens: &PathEnsemble, eps: f64) -> Vec<(f64, f64)> {
    ens.extinction_times(eps)
}

#[cfg(test)]
mod tests;
