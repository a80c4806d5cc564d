//! Run configuration: one TOML file per run, unknown keys rejected.

use std::path::PathBuf;

use cbranch::mechanisms::{ImmigrationSpec, MechanismSpec};
use cbranch::verify::OdeGrid;
use cbranch::{Immigration, McSpec, Mechanism, Quadratic, Scheme};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<cbranch::Error> for ConfigError {
    fn from(e: cbranch::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Initial mass of the type-0 population.
    pub x: Option<f64>,
    pub quadratic: Option<QuadraticSection>,
    pub psi0: Option<MechanismSpec>,
    pub phi: Option<ImmigrationSpec>,
    pub psi: Option<MechanismSpec>,
    pub theta: Option<f64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: LambdaGrid,
    #[serde(default)]
    pub laplace: LaplaceSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSection {
    pub alpha: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub lambdas: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub n: Option<usize>,
}

impl LambdaGrid {
    pub fn points(&self) -> Result<Vec<f64>, ConfigError> {
        if let Some(l) = &self.lambdas {
            if self.min.is_some() || self.max.is_some() || self.n.is_some() {
                return bad("grid: give either `lambdas` or `min`/`max`/`n`, not both");
            }
            if l.is_empty() || l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("grid.lambdas must be a non-empty list of finite values >= 0");
            }
            return Ok(l.clone());
        }
        let (lo, hi, n) = (self.min.unwrap_or(0.1), self.max.unwrap_or(10.0), self.n.unwrap_or(100));
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || n == 0 || (n == 1 && hi != lo) {
            return bad(format!("grid: need 0 <= min <= max and n >= 1, got min = {lo}, max = {hi}, n = {n}"));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Ode,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceSection {
    pub method: Option<Method>,
    pub t: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Times at which `Y⁰` is observed; `u = t` when absent. Rows with `u > t` are skipped.
    pub u: Option<Vec<f64>>,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        Self { method: None, t: vec![0.5, 1.0, 2.0], lambda1: vec![0.5, 2.0], lambda2: vec![0.5, 2.0], u: None }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub seed: u64,
    pub n_paths: usize,
    pub n_types: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub substeps: usize,
    pub scheme: Scheme,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            seed: 42,
            n_paths: 100,
            n_types: 12,
            dt: 1.0 / 64.0,
            n_steps: 64,
            substeps: 4,
            scheme: Scheme::ExactQuadratic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Ode,
    Theorem,
    Joint,
    Extinction,
    Shift,
    Iteration,
    Conditional,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Ode,
        Suite::Theorem,
        Suite::Joint,
        Suite::Extinction,
        Suite::Shift,
        Suite::Iteration,
        Suite::Conditional,
    ];

    pub fn needs_quadratic(self) -> bool {
        matches!(self, Suite::Ode | Suite::Joint | Suite::Extinction | Suite::Conditional)
    }

    pub fn needs_ensemble(self) -> bool {
        matches!(self, Suite::Theorem | Suite::Joint | Suite::Extinction)
    }

    pub fn parse(s: &str) -> Result<Suite, ConfigError> {
        Suite::deserialize(toml::Value::String(s.to_string())).or_else(|_| {
            bad(format!(
                "unknown suite `{s}` (expected one of ode, theorem, joint, extinction, shift, iteration, conditional)"
            ))
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suites: Option<Vec<Suite>>,
    pub mc: McSpec,
    pub ode_tol: f64,
    /// `(t, λ)` points for the theorem check.
    pub points: Vec<[f64; 2]>,
    /// `(λ₁, λ₂)` pairs for the joint law.
    pub pairs: Vec<[f64; 2]>,
    pub t: f64,
    pub u: f64,
    pub delta: f64,
    pub ode: OdeSection,
    pub shift: ShiftSection,
    pub iteration: IterationSection,
    pub conditional: ConditionalSection,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            suites: None,
            mc: McSpec::default(),
            ode_tol: cbranch::verify::ODE_TOL,
            points: vec![[1.0, 1.0]],
            pairs: vec![[1.0, 1.0], [0.5, 2.0]],
            t: 1.0,
            u: 0.5,
            delta: 0.05,
            ode: OdeSection::default(),
            shift: ShiftSection::default(),
            iteration: IterationSection::default(),
            conditional: ConditionalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSection {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub t: Vec<f64>,
}

impl Default for OdeSection {
    fn default() -> Self {
        let g = OdeGrid::default();
        Self { alpha: g.alphas, theta: g.thetas, lambda1: g.lambda1s, lambda2: g.lambda2s, t: g.ts }
    }
}

impl OdeSection {
    pub fn grid(&self) -> OdeGrid {
        OdeGrid {
            alphas: self.alpha.clone(),
            thetas: self.theta.clone(),
            lambda1s: self.lambda1.clone(),
            lambda2s: self.lambda2.clone(),
            ts: self.t.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSection {
    /// Mechanism to shift; the model's `ψ⁰ − φ` when absent.
    pub mechanism: Option<MechanismSpec>,
    pub theta: f64,
    pub lambdas: LambdaGrid,
    /// Run the law-level check as well.
    pub law: bool,
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self { mechanism: None, theta: 0.25, lambdas: LambdaGrid::default(), law: true }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationSection {
    pub n: usize,
    pub tol: f64,
    /// `μ = mass·δ_at`.
    pub at: f64,
    pub mass: f64,
}

impl Default for IterationSection {
    fn default() -> Self {
        Self { n: 30, tol: 1e-6, at: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionalSection {
    pub lambda2: f64,
    pub u: f64,
    pub t: Vec<f64>,
    pub tol: f64,
}

impl Default for ConditionalSection {
    fn default() -> Self {
        Self { lambda2: 1.0, u: 1.0, t: vec![10.0, 25.0, 50.0], tol: 1e-6 }
    }
}

/// The pair `(ψ⁰, φ)`, plus the quadratic parameters when the pair has that shape.
#[derive(Debug, Clone)]
pub struct Model {
    pub psi0: Mechanism,
    pub phi: Immigration,
    pub x: f64,
    pub quadratic: Option<Quadratic>,
}

impl Model {
    pub fn psi(&self) -> Result<Mechanism, ConfigError> {
        Ok(self.psi0.subtract_immigration(&self.phi)?)
    }

    pub fn require_quadratic(&self, what: &str) -> Result<Quadratic, ConfigError> {
        self.quadratic.ok_or_else(|| {
            ConfigError(format!("{what} needs ψ⁰(u) = (α+2θ)u + u² and φ(u) = 2θu; use a [quadratic] block"))
        })
    }

    pub fn describe(&self) -> String {
        match self.quadratic {
            Some(q) => format!("quadratic alpha={} theta={} x={}", q.alpha, q.theta, q.x),
            None => format!(
                "psi0 alpha={} beta={} levy_terms={} phi alpha_bar={} nu_terms={} x={}",
                self.psi0.alpha,
                self.psi0.beta,
                self.psi0.levy.terms.len(),
                self.phi.alpha_bar,
                self.phi.nu.terms.len(),
                self.x
            ),
        }
    }
}

impl RunConfig {
    /// Parses `text` after applying `key.path=value` overrides.
    pub fn parse(text: &str, sets: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        for s in sets {
            apply_set(&mut table, s)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))
    }

    pub fn model(&self) -> Result<Model, ConfigError> {
        let x = self.x.unwrap_or(1.0);
        if !(x >= 0.0 && x.is_finite()) {
            return bad(format!("x must be finite and >= 0, got {x}"));
        }
        let forms = [self.quadratic.is_some(), self.psi0.is_some(), self.psi.is_some()];
        if forms.iter().filter(|f| **f).count() > 1 {
            return bad("give exactly one of [quadratic], [psi0] (+ [phi]) or [psi] + theta");
        }
        if self.phi.is_some() && self.psi0.is_none() {
            return bad("[phi] needs a [psi0] block");
        }
        if self.theta.is_some() && self.psi.is_none() {
            return bad("top-level `theta` goes with a [psi] block; the quadratic form takes quadratic.theta");
        }
        let (psi0, phi) = if let Some(spec) = &self.psi0 {
            let phi = match &self.phi {
                Some(s) => Immigration::from_spec(s)?,
                None => Immigration::zero(),
            };
            (Mechanism::from_spec(spec)?, phi)
        } else if let Some(spec) = &self.psi {
            let psi = Mechanism::from_spec(spec)?;
            match self.theta {
                None | Some(0.0) => (psi, Immigration::zero()),
                Some(th) => (psi.shift(th)?, psi.tilde_phi_theta(th)?),
            }
        } else {
            let q = self.quadratic.unwrap_or(QuadraticSection { alpha: 0.5, theta: 0.5 });
            let p = Quadratic::new(q.alpha, q.theta, x)?;
            return Ok(Model { psi0: p.psi0(), phi: p.phi(), x, quadratic: Some(p) });
        };
        let quadratic = as_quadratic(&psi0, &phi, x);
        Ok(Model { psi0, phi, x, quadratic })
    }
}

/// Recognises `ψ⁰(u) = (α+2θ)u + u²`, `φ(u) = 2θu` with `α, θ ≥ 0`.
fn as_quadratic(psi0: &Mechanism, phi: &Immigration, x: f64) -> Option<Quadratic> {
    if !psi0.levy.is_zero() || !phi.nu.is_zero() || psi0.beta != 1.0 {
        return None;
    }
    Quadratic::new(psi0.alpha - phi.alpha_bar, 0.5 * phi.alpha_bar, x).ok()
}

fn apply_set(table: &mut toml::Table, set: &str) -> Result<(), ConfigError> {
    let Some((key, raw)) = set.split_once('=') else {
        return bad(format!("--set expects key=value, got `{set}`"));
    };
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return bad(format!("--set {key}: `{p}` is not a table")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_to_quadratic_model() {
        let m = RunConfig::default().model().unwrap();
        let q = m.quadratic.unwrap();
        assert_eq!((q.alpha, q.theta, q.x), (0.5, 0.5, 1.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("bogus = 1", &[]).is_err());
        assert!(RunConfig::parse("[simulate]\nnpaths = 3", &[]).is_err());
        assert!(RunConfig::parse("[quadratic]\nalpha = 0.5\ntheta = 0.5\nbeta = 2", &[]).is_err());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = RunConfig::parse(
            "[simulate]\nn_paths = 3",
            &["simulate.n_paths=7".into(), "verify.mc.scheme=euler_diffusion".into()],
        )
        .unwrap();
        assert_eq!(c.simulate.n_paths, 7);
        assert_eq!(c.verify.mc.scheme, Scheme::EulerDiffusion);
        assert!(RunConfig::parse("", &["simulate.nope=1".into()]).is_err());
        assert!(RunConfig::parse("", &["novalue".into()]).is_err());
    }

    #[test]
    fn psi_and_theta_form_matches_quadratic() {
        let c = RunConfig::parse("theta = 0.5\n[psi]\nalpha = 0.5\nbeta = 1.0", &[]).unwrap();
        let m = c.model().unwrap();
        let q = m.quadratic.unwrap();
        assert!((q.alpha - 0.5).abs() < 1e-15 && (q.theta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn levy_blocks_parse() {
        let c = RunConfig::parse("[psi0]\nalpha = 1.0\nlevy = [{ kind = \"exp\", c = 1.5, rho = 3.0 }]", &[]).unwrap();
        let m = c.model().unwrap();
        assert!(m.quadratic.is_none());
        assert_eq!(m.psi0.theta_zero().theta0, 3.0);
    }

    #[test]
    fn conflicting_forms_rejected() {
        let text = "[quadratic]\nalpha = 0.5\ntheta = 0.5\n[psi0]\nalpha = 1.0";
        assert!(RunConfig::parse(text, &[]).unwrap().model().is_err());
        assert!(RunConfig::parse("[phi]\nalpha_bar = 1.0", &[]).unwrap().model().is_err());
    }

    #[test]
    fn lambda_grid_forms() {
        assert_eq!(LambdaGrid::default().points().unwrap().len(), 100);
        let g = LambdaGrid { min: Some(0.0), max: Some(1.0), n: Some(3), lambdas: None };
        assert_eq!(g.points().unwrap(), vec![0.0, 0.5, 1.0]);
        let g = LambdaGrid { lambdas: Some(vec![1.0]), n: Some(3), ..Default::default() };
        assert!(g.points().is_err());
    }

    #[test]
    fn suite_names() {
        assert_eq!(Suite::parse("shift").unwrap(), Suite::Shift);
        assert!(Suite::parse("nope").is_err());
    }
}
