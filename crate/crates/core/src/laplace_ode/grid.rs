use crate::error::{Error, Result};
use crate::numerics::ode::dense_eval;
use crate::numerics::quadrature::{GL5_W, GL5_X};
use crate::scalar::Scalar;

/// Behaviour to the right of the last grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beyond {
    Zero,
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
struct Piece<T> {
    lo: T,
    hi: T,
    /// Dense-output coefficients; θ runs from `hi` to `lo` when `reversed`.
    r: [T; 5],
    reversed: bool,
}

impl<T: Scalar> Piece<T> {
    fn eval(&self, s: T) -> T {
        let len = self.hi - self.lo;
        if len == T::zero() {
            return self.r[0];
        }
        let th = if self.reversed { (self.hi - s) / len } else { (s - self.lo) / len };
        dense_eval(&self.r, th)
    }
}

/// A solved function of time. Solver output is left-continuous at jumps and
/// interpolated with the integrator's dense output; user grids are linear.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    pieces: Vec<Piece<T>>,
    beyond: Beyond,
    pub solver_tol: T,
}

impl<T: Scalar> GridFunction<T> {
    /// Identically zero (a solution whose domain lies above the support).
    pub fn zero() -> Self {
        Self { pieces: Vec::new(), beyond: Beyond::Zero, solver_tol: T::zero() }
    }

    /// Piecewise linear through strictly increasing `(s, value)` points.
    pub fn from_points(points: &[(T, T)], beyond: Beyond) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("grid function needs at least one point".into()));
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Domain("grid points must be strictly increasing".into()));
        }
        let mut pieces: Vec<Piece<T>> = points
            .windows(2)
            .map(|w| Piece {
                lo: w[0].0,
                hi: w[1].0,
                r: [w[0].1, w[1].1 - w[0].1, T::zero(), T::zero(), T::zero()],
                reversed: false,
            })
            .collect();
        if pieces.is_empty() {
            let (s, v) = points[0];
            pieces.push(Piece { lo: s, hi: s, r: [v, T::zero(), T::zero(), T::zero(), T::zero()], reversed: false });
        }
        Ok(Self { pieces, beyond, solver_tol: T::zero() })
    }

    /// `h ≡ c` on [0, ∞).
    pub fn constant(c: T) -> Self {
        Self::from_points(&[(T::zero(), c)], Beyond::Hold).expect("single point")
    }

    pub(crate) fn from_reversed_pieces(mut raw: Vec<(T, T, [T; 5])>, solver_tol: T) -> Self {
        raw.sort_by(|a, b| {
            a.0.partial_cmp(&b.0).expect("finite grid").then(a.1.partial_cmp(&b.1).expect("finite grid"))
        });
        let pieces = raw.into_iter().map(|(lo, hi, r)| Piece { lo, hi, r, reversed: true }).collect();
        Self { pieces, beyond: Beyond::Zero, solver_tol }
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Left end of the stored domain.
    pub fn start(&self) -> Option<T> {
        self.pieces.first().map(|p| p.lo)
    }

    /// Right end of the stored domain.
    pub fn end(&self) -> Option<T> {
        self.pieces.last().map(|p| p.hi)
    }

    /// Value at `s`. Left-continuous at jumps; to the left of the stored
    /// domain the first value is held.
    pub fn eval(&self, s: T) -> T {
        let Some(last) = self.pieces.last() else {
            return T::zero();
        };
        if s > last.hi {
            return match self.beyond {
                Beyond::Zero => T::zero(),
                Beyond::Hold => last.eval(last.hi),
            };
        }
        let first = &self.pieces[0];
        if s < first.lo {
            return first.eval(first.lo);
        }
        let i = self.pieces.partition_point(|p| p.hi < s);
        self.pieces[i].eval(s)
    }

    /// Strictly increasing node times with left-continuous values.
    pub fn points(&self) -> Vec<(T, T)> {
        let mut out: Vec<(T, T)> = Vec::with_capacity(self.pieces.len() + 1);
        for p in &self.pieces {
            if out.last().is_none_or(|l| l.0 < p.lo) {
                out.push((p.lo, self.eval(p.lo)));
            }
        }
        if let Some(p) = self.pieces.last() {
            if out.last().is_none_or(|l| l.0 < p.hi) {
                out.push((p.hi, self.eval(p.hi)));
            }
        }
        out
    }

    /// Node times, for breakpoint alignment.
    pub fn knots(&self) -> Vec<T> {
        self.points().into_iter().map(|p| p.0).collect()
    }

    /// The same function shifted up by `c` on its stored domain.
    pub fn offset(&self, c: T) -> Self {
        let mut g = self.clone();
        for p in &mut g.pieces {
            p.r[0] = p.r[0] + c;
        }
        g
    }

    /// `∫ f(s, w(s)) ds` over each piece by 5-point Gauss–Legendre, returned
    /// as (lo, hi, integral) in ascending order.
    pub(crate) fn piece_integrals<F: FnMut(T, T) -> T>(&self, mut f: F) -> Vec<(T, T, T)> {
        self.pieces
            .iter()
            .map(|p| {
                let half = T::c(0.5) * (p.hi - p.lo);
                let mid = T::c(0.5) * (p.hi + p.lo);
                let mut acc = T::zero();
                if half > T::zero() {
                    for k in 0..5 {
                        let s = mid + half * T::c(GL5_X[k]);
                        acc = acc + T::c(GL5_W[k]) * f(s, p.eval(s));
                    }
                }
                (p.lo, p.hi, acc * half)
            })
            .collect()
    }
}

/// `sup_s |a(s) − b(s)|` over the nodes and piece midpoints of both.
pub fn sup_gap<T: Scalar>(a: &GridFunction<T>, b: &GridFunction<T>) -> T {
    let mut pts: Vec<T> = a.knots();
    pts.extend(b.knots());
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite grid"));
    pts.dedup();
    let mut probe = pts.clone();
    probe.extend(pts.windows(2).map(|w| T::c(0.5) * (w[0] + w[1])));
    probe.iter().fold(T::zero(), |m, &s| m.max((a.eval(s) - b.eval(s)).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interpolation_and_tails() {
        let g = GridFunction::from_points(&[(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)], Beyond::Hold).unwrap();
        assert_eq!(g.eval(0.5), 2.0);
        assert_eq!(g.eval(1.5), 2.5);
        assert_eq!(g.eval(5.0), 2.0);
        let z = GridFunction::from_points(&[(0.0, 1.0), (1.0, 3.0)], Beyond::Zero).unwrap();
        assert_eq!(z.eval(1.0), 3.0);
        assert_eq!(z.eval(1.0 + 1e-12), 0.0);
        assert_eq!(GridFunction::constant(2.0).eval(7.0), 2.0);
        assert_eq!(GridFunction::<f64>::zero().eval(0.3), 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::<f64>::from_points(&[], Beyond::Zero).is_err());
        assert!(GridFunction::from_points(&[(1.0, 0.0), (1.0, 1.0)], Beyond::Zero).is_err());
    }

    #[test]
    fn offset_shifts_values() {
        let g = GridFunction::from_points(&[(0.0, 1.0), (1.0, 3.0)], Beyond::Zero).unwrap().offset(0.1);
        assert!((g.eval(0.5) - 2.1f64).abs() < 1e-15);
        assert_eq!(sup_gap(&g, &g), 0.0);
    }
}
