//! Dormand–Prince 5(4) with Hairer's 4th-order dense output. States are small
//! dense vectors; the integrator only runs forward in its own variable,
//! backward problems are mapped by the callers.
//!
//! Error control is per unit step: a step of length h may commit a local error
//! of at most `tol·h/span`, so the defect accumulated over the whole interval
//! stays at the tolerance rather than growing with the step count.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub h_max: Option<T>,
    pub max_steps: usize,
}

impl<T: Scalar> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            rtol: T::c(1e-10).max(T::tol_floor()),
            atol: T::c(1e-10).max(T::tol_floor()),
            h_max: None,
            max_steps: 200_000,
        }
    }
}

impl<T: Scalar> OdeOptions<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.rtol = tol.max(T::tol_floor());
        self.atol = tol.max(T::tol_floor());
        self
    }

    /// The tolerance reported on produced grid functions.
    pub fn tol(&self) -> T {
        self.atol.max(self.rtol)
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct OdeStep<T> {
    pub t0: T,
    pub t1: T,
    pub y0: Vec<T>,
    pub y1: Vec<T>,
    /// Per component `[r1..r5]` of the dense-output polynomial.
    pub cont: Vec<[T; 5]>,
}

impl<T: Scalar> OdeStep<T> {
    /// Dense output at `t ∈ [t0, t1]` for component `i`.
    pub fn eval(&self, i: usize, t: T) -> T {
        let h = self.t1 - self.t0;
        if h == T::zero() {
            return self.y1[i];
        }
        let th = (t - self.t0) / h;
        dense_eval(&self.cont[i], th)
    }
}

#[inline]
pub(crate) fn dense_eval<T: Scalar>(r: &[T; 5], th: T) -> T {
    let th1 = T::one() - th;
    r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`. Returns every accepted
/// step; the last step ends exactly at `t1`.
pub fn dopri5<T, F>(mut f: F, t0: T, t1: T, y0: &[T], opts: &OdeOptions<T>) -> Result<Vec<OdeStep<T>>>
where
    T: Scalar,
    F: FnMut(T, &[T], &mut [T]),
{
    let n = y0.len();
    let mut steps = Vec::new();
    if t1 <= t0 {
        return Ok(steps);
    }
    let span = t1 - t0;
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let c = T::c;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut k5 = vec![T::zero(); n];
    let mut k6 = vec![T::zero(); n];
    let mut k7 = vec![T::zero(); n];
    let mut ytmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    f(t, &y, &mut k1);
    check_finite(t, &k1)?;

    // initial step guess (Hairer's HINIT, simplified)
    let sk = |yi: T| opts.atol + opts.rtol * yi.abs();
    let d0 = rms((0..n).map(|i| y[i] / sk(y[i])));
    let d1 = rms((0..n).map(|i| k1[i] / sk(y[i])));
    let mut h = if d0 < c(1e-5) || d1 < c(1e-5) { c(1e-6) } else { c(0.01) * d0 / d1 };
    h = h.min(h_max).max(span * c(1e-12));

    let mut n_steps = 0usize;
    let mut last_reject = false;
    while t < t1 {
        if n_steps >= opts.max_steps {
            return Err(Error::Solver { at: t.f64(), reason: "step budget exhausted".into() });
        }
        n_steps += 1;
        let mut last = false;
        if t + h >= t1 || (t1 - (t + h)) < span * c(1e-13) {
            h = t1 - t;
            last = true;
        }
        for i in 0..n {
            ytmp[i] = y[i] + h * c(A21) * k1[i];
        }
        f(t + c(C2) * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (c(A31) * k1[i] + c(A32) * k2[i]);
        }
        f(t + c(C3) * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (c(A41) * k1[i] + c(A42) * k2[i] + c(A43) * k3[i]);
        }
        f(t + c(C4) * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (c(A51) * k1[i] + c(A52) * k2[i] + c(A53) * k3[i] + c(A54) * k4[i]);
        }
        f(t + c(C5) * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (c(A61) * k1[i] + c(A62) * k2[i] + c(A63) * k3[i] + c(A64) * k4[i] + c(A65) * k5[i]);
        }
        let tph = if last { t1 } else { t + h };
        f(tph, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (c(A71) * k1[i] + c(A73) * k3[i] + c(A74) * k4[i] + c(A75) * k5[i] + c(A76) * k6[i]);
        }
        f(tph, &ynew, &mut k7);

        let mut err_sq = T::zero();
        let mut finite = true;
        for i in 0..n {
            let e = h * (c(E1) * k1[i] + c(E3) * k3[i] + c(E4) * k4[i] + c(E5) * k5[i] + c(E6) * k6[i] + c(E7) * k7[i]);
            let scale = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / scale;
            err_sq = err_sq + r * r;
            finite &= ynew[i].is_finite() && k7[i].is_finite();
        }
        let err = (err_sq / c(n.max(1) as f64)).sqrt() * span / h;
        if !finite || !err.is_finite() {
            if h <= span * c(1e-14) {
                return Err(Error::Solver { at: t.f64(), reason: "non-finite state".into() });
            }
            h = h * c(0.25);
            last_reject = true;
            continue;
        }
        if err <= T::one() {
            let cont = (0..n)
                .map(|i| {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    [
                        y[i],
                        ydiff,
                        bspl,
                        ydiff - h * k7[i] - bspl,
                        h * (c(D1) * k1[i]
                            + c(D3) * k3[i]
                            + c(D4) * k4[i]
                            + c(D5) * k5[i]
                            + c(D6) * k6[i]
                            + c(D7) * k7[i]),
                    ]
                })
                .collect();
            steps.push(OdeStep { t0: t, t1: tph, y0: y.clone(), y1: ynew.clone(), cont });
            t = tph;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = c(0.9) * err.powf(c(-0.25));
            fac = fac.min(c(5.0)).max(c(0.2));
            if last_reject {
                fac = fac.min(T::one());
            }
            last_reject = false;
            h = (h * fac).min(h_max);
            if last {
                break;
            }
        } else {
            let fac = (c(0.9) * err.powf(c(-0.25))).max(c(0.2));
            h = h * fac;
            last_reject = true;
            if h < span * c(1e-15) {
                return Err(Error::Solver { at: t.f64(), reason: "step size underflow".into() });
            }
        }
    }
    Ok(steps)
}

fn rms<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    let mut s = T::zero();
    let mut n = 0usize;
    for v in it {
        s = s + v * v;
        n += 1;
    }
    (s / T::c(n.max(1) as f64)).sqrt()
}

fn check_finite<T: Scalar>(t: T, v: &[T]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Solver { at: t.f64(), reason: "non-finite derivative".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let steps =
            dopri5(|_, y: &[f64], d: &mut [f64]| d[0] = -y[0], 0.0, 2.0, &[1.0], &OdeOptions::default()).unwrap();
        let last = steps.last().unwrap();
        assert_eq!(last.t1, 2.0);
        assert!((last.y1[0] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_tracks_solution() {
        let steps = dopri5(
            |_, y: &[f64], d: &mut [f64]| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            3.0,
            &[0.0, 1.0],
            &OdeOptions::default(),
        )
        .unwrap();
        for s in &steps {
            let tm = 0.5 * (s.t0 + s.t1);
            assert!((s.eval(0, tm) - tm.sin()).abs() < 1e-9);
            assert!((s.eval(1, tm) - tm.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn riccati_closed_form() {
        // u' = -(u + u^2), u(0)=1  =>  u(t) = e^{-t} / (1 + (1 - e^{-t}))
        let steps = dopri5(
            |_, y: &[f64], d: &mut [f64]| d[0] = -(y[0] + y[0] * y[0]),
            0.0,
            1.0,
            &[1.0],
            &OdeOptions::default(),
        )
        .unwrap();
        let e = (-1.0f64).exp();
        assert!((steps.last().unwrap().y1[0] - e / (2.0 - e)).abs() < 1e-10);
    }
}
