//! Checks tying simulation and numerics to the closed forms.

mod suites;

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::quadratic::QuadraticParams;
use crate::simulate::{simulate_multitype, MCEstimate, MultitypeOptions, PathEnsemble, PathGrid, RngSpec, Scheme};

pub use suites::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// `|estimate − theory| ≤ k·stderr`.
    Z(f64),
    /// `|estimate − theory| ≤ tol`.
    Abs(f64),
    /// `estimate ≤ bound`; `theory` holds the bound.
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub theory: f64,
    pub estimate: f64,
    /// Standard error for `Z` gates, the tolerance for `Abs`, the bound for `AtMost`.
    pub stderr: f64,
    /// z-score for `Z` gates, the absolute error for `Abs`, the estimate for `AtMost`.
    pub score: f64,
    pub gate: Gate,
    pub pass: bool,
}

impl Check {
    pub fn mc(name: impl Into<String>, theory: f64, est: MCEstimate, z_gate: f64) -> Self {
        Self::build(name.into(), theory, est.mean, est.stderr, Gate::Z(z_gate))
    }

    pub fn abs(name: impl Into<String>, theory: f64, estimate: f64, tol: f64) -> Self {
        Self::build(name.into(), theory, estimate, tol, Gate::Abs(tol))
    }

    pub fn at_most(name: impl Into<String>, estimate: f64, bound: f64) -> Self {
        Self::build(name.into(), bound, estimate, bound, Gate::AtMost)
    }

    fn build(name: String, theory: f64, estimate: f64, stderr: f64, gate: Gate) -> Self {
        let (score, pass) = match gate {
            Gate::Z(k) => {
                let z = MCEstimate { mean: estimate, stderr, n_samples: 2 }.z(theory);
                (z, z.abs() <= k)
            }
            Gate::Abs(tol) => {
                let e = (estimate - theory).abs();
                (e, e <= tol)
            }
            Gate::AtMost => (estimate, estimate <= theory),
        };
        Self { name, theory, estimate, stderr, score, gate, pass: pass && estimate.is_finite() }
    }

    /// The same check against another theory value.
    pub fn with_theory(&self, theory: f64) -> Self {
        Self::build(self.name.clone(), theory, self.estimate, self.stderr, self.gate)
    }

    /// Half-width of the acceptance band around the theory value.
    pub fn gate_width(&self) -> f64 {
        match self.gate {
            Gate::Z(k) => k * self.stderr,
            Gate::Abs(tol) => tol,
            Gate::AtMost => self.theory.abs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub seed: Option<u64>,
    pub config: String,
}

impl VerificationReport {
    pub fn new(seed: Option<u64>, config: impl Into<String>) -> Self {
        Self { checks: Vec::new(), seed, config: config.into() }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
        if self.seed.is_none() {
            self.seed = other.seed;
        }
        if !other.config.is_empty() {
            if !self.config.is_empty() {
                self.config.push('\n');
            }
            self.config.push_str(&other.config);
        }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// `check,theory,estimate,stderr,z,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "check,theory,estimate,stderr,z,pass")?;
        for c in &self.checks {
            writeln!(w, "{},{},{},{},{},{}", c.name, c.theory, c.estimate, c.stderr, c.score, c.pass)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed: {seed}");
        }
        for line in self.config.lines() {
            let _ = writeln!(s, "config: {line}");
        }
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            let detail = match c.gate {
                Gate::Z(k) => format!("z = {:+.3} (gate {k})", c.score),
                Gate::Abs(tol) => format!("|err| = {:.3e} (tol {tol:.1e})", c.score),
                Gate::AtMost => format!("{:.4e} <= {:.4e}", c.estimate, c.theory),
            };
            let _ = writeln!(s, "{tag} {:<40} theory {:<22} estimate {:<22} {detail}", c.name, c.theory, c.estimate);
        }
        let failed = self.failures().count();
        let _ = writeln!(
            s,
            "{}: {} checks, {} failed",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.checks.len(),
            failed
        );
        s
    }
}

/// Monte Carlo settings shared by the simulation-backed suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub seed: u64,
    pub n_paths: usize,
    pub n_types: usize,
    pub dt: f64,
    pub substeps: usize,
    pub scheme: Scheme,
    pub z_gate: f64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_paths: 100_000,
            n_types: 12,
            dt: 1.0 / 64.0,
            substeps: 4,
            scheme: Scheme::ExactQuadratic,
            z_gate: 4.0,
        }
    }
}

impl McSpec {
    pub fn simulate(
        &self,
        psi0: &BranchingMechanism<f64>,
        phi: &ImmigrationMechanism<f64>,
        x: f64,
        horizon: f64,
    ) -> Result<PathEnsemble> {
        let grid = PathGrid::covering(self.dt, horizon)?;
        let opts = MultitypeOptions::new(self.n_types, self.n_paths, self.scheme).with_substeps(self.substeps);
        simulate_multitype(psi0, phi, x, grid, opts, RngSpec::new(self.seed))
    }

    /// The cascade for `ψ⁰(u) = (α+2θ)u + u²`, `φ(u) = 2θu`.
    pub fn simulate_quadratic(&self, p: &QuadraticParams<f64>, horizon: f64) -> Result<PathEnsemble> {
        self.simulate(&p.psi0(), &p.phi(), p.x, horizon)
    }

    pub fn describe(&self) -> String {
        format!(
            "seed={} n_paths={} n_types={} dt={} substeps={} scheme={} z_gate={}",
            self.seed, self.n_paths, self.n_types, self.dt, self.substeps, self.scheme, self.z_gate
        )
    }
}
