//! Tabulated Lévy measures for the Euler schemes.

use rand::Rng;

use crate::mechanisms::LevyMeasure;
use crate::numerics::quadrature::{GL5_W, GL5_X};

const BINS_PER_DECADE: f64 = 60.0;
/// Jumps above this size are dropped from the table.
const MAX_JUMP: f64 = 1e6;
/// Lower end of the drift integral for jumps below the threshold.
const MIN_JUMP: f64 = 1e-14;

/// Jump sizes `≥ lo`, sampled bin-first then uniformly inside the bin.
#[derive(Debug, Clone, Default)]
pub(crate) struct JumpTable {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cum: Vec<f64>,
    pub total: f64,
}

fn gl5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    GL5_X.iter().zip(GL5_W.iter()).map(|(&x, &w)| w * f(m + r * x)).sum::<f64>() * r
}

/// Log-spaced bins of `[a, b]`, plus the breakpoint at 1 where tail terms start.
fn log_bins(a: f64, b: f64) -> Vec<(f64, f64)> {
    let n = ((b / a).log10() * BINS_PER_DECADE).ceil().max(1.0) as usize;
    let r = (b / a).powf(1.0 / n as f64);
    let mut edges: Vec<f64> = (0..=n).map(|i| a * r.powi(i as i32)).collect();
    edges[n] = b;
    if a < 1.0 && b > 1.0 {
        edges.push(1.0);
        edges.sort_by(f64::total_cmp);
    }
    edges.windows(2).map(|w| (w[0], w[1])).filter(|(x, y)| y > x).collect()
}

impl JumpTable {
    pub fn new(m: &LevyMeasure<f64>, lo: f64) -> Self {
        let mut t = JumpTable::default();
        let mut acc = 0.0;
        for (a, b) in log_bins(lo, MAX_JUMP) {
            let w = gl5(|l| m.density_at(l), a, b).max(0.0);
            if w > 0.0 {
                acc += w;
                t.lo.push(a);
                t.hi.push(b);
                t.cum.push(acc);
            }
        }
        for (loc, mass) in m.atoms() {
            if loc >= lo && mass > 0.0 {
                acc += mass;
                t.lo.push(loc);
                t.hi.push(loc);
                t.cum.push(acc);
            }
        }
        t.total = acc;
        t
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.total;
        let i = self.cum.partition_point(|&c| c < u).min(self.cum.len() - 1);
        let (a, b) = (self.lo[i], self.hi[i]);
        if a == b {
            a
        } else {
            a + (b - a) * rng.random::<f64>()
        }
    }
}

/// `∫_{[a,b]} ℓ m(dℓ)` over the density and the atoms in `[a, b]`.
pub(crate) fn first_moment_between(m: &LevyMeasure<f64>, a: f64, b: f64) -> f64 {
    let dens: f64 = log_bins(a, b).into_iter().map(|(x, y)| gl5(|l| l * m.density_at(l), x, y)).sum();
    dens + m.atoms().filter(|&(l, _)| l >= a && l <= b).map(|(l, w)| l * w).sum::<f64>()
}

/// `∫_{(0,lo)} ℓ m(dℓ)`, the mass carried by jumps below the table.
pub(crate) fn small_jump_mean(m: &LevyMeasure<f64>, lo: f64) -> f64 {
    let dens: f64 = log_bins(MIN_JUMP, lo).into_iter().map(|(x, y)| gl5(|l| l * m.density_at(l), x, y)).sum();
    dens + m.atoms().filter(|&(l, _)| l < lo).map(|(l, w)| l * w).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::LevyTerm;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_table_mass_and_mean() {
        let m = LevyMeasure::exp_density(2.0, 3.0);
        let t = JumpTable::new(&m, 1e-4);
        assert_relative_eq!(t.total, 2.0 / 3.0 * (-3e-4f64).exp(), max_relative = 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean = (0..n).map(|_| t.sample(&mut rng)).sum::<f64>() / n as f64;
        // exponential conditioned on ≥ 1e-4
        assert!((mean - (1.0 / 3.0 + 1e-4)).abs() < 4.0 * (1.0 / 3.0) / (n as f64).sqrt());
    }

    #[test]
    fn atoms_and_moments() {
        let m = LevyMeasure::from_terms(vec![LevyTerm::Atom { location: 0.5, mass: 2.0 }, LevyTerm::stable(1.0, 0.5)]);
        let t = JumpTable::new(&m, 1e-4);
        // ∫_{1e-4}^{1e6} ℓ^{-3/2} = 2(1e2 − 1e-3)
        assert_relative_eq!(t.total, 2.0 + 2.0 * (100.0 - 1e-3), max_relative = 1e-8);
        assert_relative_eq!(first_moment_between(&m, 1e-4, 1.0), 1.0 + 2.0 * (1.0 - 1e-2), max_relative = 1e-8);
        assert_relative_eq!(small_jump_mean(&m, 1e-4), 2.0 * 1e-2, max_relative = 1e-5);
    }
}
