use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use cbranch::laplace_ode::{solve_joint_pair, solve_joint_two_times};
use cbranch::mechanisms::{BranchingMechanism, MechanismClass};
use cbranch::quadratic::{v0, v1};
use cbranch::simulate::{simulate_multitype, MultitypeOptions};
use cbranch::verify::{
    verify_conditional_limit, verify_extinction_laws, verify_iteration_convergence, verify_joint_law, verify_ode_grid,
    verify_shift_identities, verify_theorem_main,
};
use cbranch::{MCEstimate, Measure, Mechanism, PathEnsemble, PathGrid, RngSpec, VerificationReport};

use crate::config::{ConfigError, Method, Model, RunConfig, Suite};

pub enum Failure {
    Config(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<cbranch::Error> for Failure {
    fn from(e: cbranch::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Where a command's table and summary go: files under `dir`, or stdout and stderr.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> io::Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir })
    }

    fn table(&self, name: &str, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        match &self.dir {
            Some(d) => {
                let mut w = BufWriter::new(File::create(d.join(name))?);
                write(&mut w)?;
                w.flush()
            }
            None => {
                let mut w = BufWriter::new(io::stdout().lock());
                write(&mut w)?;
                w.flush()
            }
        }
    }

    fn summary(&self, name: &str, text: &str) -> io::Result<()> {
        match &self.dir {
            Some(d) => {
                std::fs::write(d.join(name), text)?;
                print!("{text}");
                Ok(())
            }
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

fn class_line(label: &str, m: &Mechanism) -> String {
    let MechanismClass { kind, conservative } = m.classify();
    let tz = m.theta_zero();
    let boundary = if tz.theta0.is_finite() {
        if tz.closed_boundary {
            " (closed)"
        } else {
            " (open)"
        }
    } else {
        ""
    };
    format!(
        "{label}: class {kind}, conservative {conservative}, psi'(0+) {}, theta0 {}{boundary}\n",
        m.psi_prime_at_zero(),
        tz.theta0
    )
}

pub fn mechanism(cfg: &RunConfig, sink: &Sink) -> Result<bool, Failure> {
    let model = cfg.model()?;
    let psi = model.psi()?;
    let lambdas = cfg.grid.points()?;
    sink.table("mechanism.csv", |w| {
        writeln!(w, "lambda,psi,phi,psi_minus_phi")?;
        for &l in &lambdas {
            writeln!(w, "{l},{},{},{}", model.psi0.value(l), model.phi.value(l), psi.value(l))?;
        }
        Ok(())
    })?;
    let mut s = format!("model: {}\n", model.describe());
    s.push_str(&class_line("psi0", &model.psi0));
    s.push_str(&class_line("psi0 - phi", &psi));
    sink.summary("mechanism.txt", &s)?;
    Ok(true)
}

struct LaplaceRow {
    t: f64,
    l1: f64,
    l2: f64,
    u: f64,
}

fn laplace_exponent(model: &Model, method: Method, r: &LaplaceRow) -> Result<f64, Failure> {
    if r.t == 0.0 {
        return Ok(r.l1 + r.l2);
    }
    let same = r.u == r.t;
    Ok(match method {
        Method::Closed => {
            let q = model.require_quadratic("method = \"closed\"")?;
            if same {
                v0(&q, r.l1, r.l2, r.t)?
            } else {
                v1(&q, r.l1, r.l2, r.u, r.t)?
            }
        }
        _ => {
            if same {
                solve_joint_pair(&model.psi0, &model.phi, r.t, r.l1, r.l2)?.0
            } else {
                solve_joint_two_times(&model.psi0, &model.phi, r.u, r.t, r.l1, r.l2)?
            }
        }
    })
}

pub fn laplace(cfg: &RunConfig, sink: &Sink) -> Result<bool, Failure> {
    let model = cfg.model()?;
    let sec = &cfg.laplace;
    let method = sec.method.unwrap_or(if model.quadratic.is_some() { Method::Closed } else { Method::Ode });
    if method != Method::Ode {
        model.require_quadratic("method = \"closed\" or \"both\"")?;
    }
    let mut rows = Vec::new();
    for &t in &sec.t {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Failure::Config(format!("laplace.t must be finite and >= 0, got {t}")));
        }
        for &l1 in &sec.lambda1 {
            for &l2 in &sec.lambda2 {
                match &sec.u {
                    None => rows.push(LaplaceRow { t, l1, l2, u: t }),
                    Some(us) => {
                        rows.extend(us.iter().filter(|&&u| u >= 0.0 && u <= t).map(|&u| LaplaceRow { t, l1, l2, u }))
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    let mut worst = 0.0f64;
    for r in &rows {
        let (w0, gap) = match method {
            Method::Both => {
                let c = laplace_exponent(&model, Method::Closed, r)?;
                let o = laplace_exponent(&model, Method::Ode, r)?;
                let gap = (c - o).abs();
                worst = worst.max(gap);
                (c, Some(gap))
            }
            m => (laplace_exponent(&model, m, r)?, None),
        };
        out.push((w0, gap));
    }
    sink.table("laplace.csv", |w| {
        write!(w, "t,lambda1,lambda2,u,w0,laplace")?;
        writeln!(w, "{}", if method == Method::Both { ",agreement" } else { "" })?;
        for (r, (w0, gap)) in rows.iter().zip(&out) {
            write!(w, "{},{},{},{},{w0},{}", r.t, r.l1, r.l2, r.u, (-model.x * w0).exp())?;
            match gap {
                Some(g) => writeln!(w, ",{g}")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    })?;
    let mut s = format!(
        "model: {}\nmethod: {}\nrows: {}\n",
        model.describe(),
        format!("{method:?}").to_lowercase(),
        rows.len()
    );
    if method == Method::Both {
        let _ = writeln!(s, "max agreement gap: {worst:e}");
    }
    sink.summary("laplace.txt", &s)?;
    Ok(true)
}

fn estimate(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = samples.collect();
    match MCEstimate::from_samples(v.iter().copied()) {
        Ok(e) => (e.mean, e.stderr),
        Err(_) => (v.first().copied().unwrap_or(f64::NAN), f64::NAN),
    }
}

fn extinct_fraction(n: usize, mass: impl Fn(usize) -> f64) -> f64 {
    (0..n).filter(|&p| mass(p) == 0.0).count() as f64 / n as f64
}

fn write_summary(ens: &PathEnsemble, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "t,mean_X,se_X,mean_Y0,se_Y0,extinct_X,extinct_Y0")?;
    let n = ens.n_paths();
    for (i, t) in ens.grid.times().enumerate() {
        let (mx, sx) = estimate((0..n).map(|p| ens.x(p)[i]));
        let (my, sy) = estimate((0..n).map(|p| ens.y0(p)[i]));
        let ex = extinct_fraction(n, |p| ens.x(p)[i]);
        let ey = extinct_fraction(n, |p| ens.y0(p)[i]);
        writeln!(w, "{t},{mx},{sx},{my},{sy},{ex},{ey}")?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, sink: &Sink) -> Result<bool, Failure> {
    let model = cfg.model()?;
    let s = &cfg.simulate;
    let grid = PathGrid::new(s.dt, s.n_steps)?;
    let opts = MultitypeOptions::new(s.n_types, s.n_paths, s.scheme).with_substeps(s.substeps).keeping_types();
    let ens = simulate_multitype(&model.psi0, &model.phi, model.x, grid, opts, RngSpec::new(s.seed))?;
    sink.table("ensemble.csv", |w| ens.write_csv(w))?;
    if sink.dir.is_some() {
        sink.table("summary.csv", |w| write_summary(&ens, w))?;
    }
    let last = grid.len() - 1;
    let horizon = grid.time(last);
    let n = ens.n_paths();
    let (mx, sx) = estimate((0..n).map(|p| ens.x(p)[last]));
    let (my, sy) = estimate((0..n).map(|p| ens.y0(p)[last]));
    let ex = extinct_fraction(n, |p| ens.x(p)[last]);
    let ey = extinct_fraction(n, |p| ens.y0(p)[last]);
    let psi = model.psi()?;
    let mut txt = format!("model: {}\nseed: {}\nscheme: {}\npaths: {n}\n", model.describe(), s.seed, s.scheme);
    let _ = writeln!(txt, "t = {horizon}: mean X {mx} (se {sx}), mean Y0 {my} (se {sy})");
    let _ = writeln!(txt, "t = {horizon}: extinct X {ex}, extinct Y0 {ey}");
    let d = psi.psi_prime_at_zero();
    if d.is_finite() {
        let _ = writeln!(txt, "t = {horizon}: theory mean X {}", model.x * (-d * horizon).exp());
    }
    if let Some(tr) = ens.truncation() {
        let _ = writeln!(txt, "truncation: sup tail mean {}, sup tail ratio {}", tr.sup_tail_mean, tr.sup_tail_ratio);
    }
    sink.summary("summary.txt", &txt)?;
    Ok(true)
}

fn shift_mechanism(cfg: &RunConfig, model: &Model) -> Result<Mechanism, Failure> {
    Ok(match &cfg.verify.shift.mechanism {
        Some(spec) => BranchingMechanism::from_spec(spec)?,
        None => model.psi()?,
    })
}

pub fn verify(cfg: &RunConfig, only: &[Suite], sink: &Sink) -> Result<bool, Failure> {
    let model = cfg.model()?;
    let v = &cfg.verify;
    let explicit = !only.is_empty() || v.suites.is_some();
    let suites: Vec<Suite> =
        if !only.is_empty() { only.to_vec() } else { v.suites.clone().unwrap_or_else(|| Suite::ALL.to_vec()) };
    let suites: Vec<Suite> = suites
        .into_iter()
        .filter(|s| !(s.needs_quadratic() && *s != Suite::Ode && model.quadratic.is_none() && !explicit))
        .collect();
    for s in &suites {
        if s.needs_quadratic() && *s != Suite::Ode && model.quadratic.is_none() {
            return Err(Failure::Config(format!("suite {s:?} needs a quadratic model")));
        }
    }
    let points: Vec<(f64, f64)> = v.points.iter().map(|p| (p[0], p[1])).collect();
    let pairs: Vec<(f64, f64)> = v.pairs.iter().map(|p| (p[0], p[1])).collect();
    let mut report =
        VerificationReport::new(Some(v.mc.seed), format!("model: {}\nmc: {}", model.describe(), v.mc.describe()));

    let ens = if suites.iter().any(|s| s.needs_ensemble()) {
        let horizon = points.iter().map(|p| p.0).fold(v.t, f64::max);
        Some(v.mc.simulate(&model.psi0, &model.phi, model.x, horizon)?)
    } else {
        None
    };
    for s in &suites {
        let part = match s {
            Suite::Ode => verify_ode_grid(&v.ode.grid(), v.ode_tol)?,
            Suite::Theorem => verify_theorem_main(
                &model.psi0,
                &model.phi,
                model.x,
                ens.as_ref().expect("ensemble"),
                &points,
                v.mc.z_gate,
            )?,
            Suite::Joint => {
                let q = model.require_quadratic("joint")?;
                verify_joint_law(&q, ens.as_ref().expect("ensemble"), &pairs, v.u, v.t, v.mc.z_gate)?
            }
            Suite::Extinction => {
                let q = model.require_quadratic("extinction")?;
                verify_extinction_laws(&q, ens.as_ref().expect("ensemble"), v.u, v.t, v.delta, v.mc.z_gate)?
            }
            Suite::Shift => {
                let m = shift_mechanism(cfg, &model)?;
                let lambdas = v.shift.lambdas.points()?;
                let law = v.shift.law.then_some((&v.mc, model.x, points.as_slice()));
                verify_shift_identities(&m, v.shift.theta, &lambdas, law)?
            }
            Suite::Iteration => {
                let it = &v.iteration;
                let mu = Measure::dirac(it.at, it.mass)?;
                verify_iteration_convergence(&model.psi0, &model.phi, &mu, it.n, it.tol)?
            }
            Suite::Conditional => {
                let q = model.require_quadratic("conditional")?;
                let c = &v.conditional;
                verify_conditional_limit(&q, c.lambda2, c.u, &c.t, c.tol)?
            }
        };
        report.checks.extend(part.checks);
    }
    sink.table("report.csv", |w| report.write_csv(w))?;
    sink.summary("report.txt", &report.summary())?;
    Ok(report.pass())
}
