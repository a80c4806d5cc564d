//! Adaptive Gauss–Kronrod (7/15) quadrature and endpoint-singularity maps.

#![allow(clippy::excessive_precision)]

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_9,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_488_9,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

/// Gauss–Legendre 5-point nodes/weights on [-1, 1].
pub(crate) const GL5_X: [f64; 5] = [
    -0.906_179_845_938_663_992_797_626_878_299_4,
    -0.538_469_310_105_683_091_036_314_420_700_2,
    0.0,
    0.538_469_310_105_683_091_036_314_420_700_2,
    0.906_179_845_938_663_992_797_626_878_299_4,
];
pub(crate) const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_087_514_264_040_719_9,
    0.478_628_670_499_366_468_041_291_514_835_6,
    0.568_888_888_888_888_888_888_888_888_888_9,
    0.478_628_670_499_366_468_041_291_514_835_6,
    0.236_926_885_056_189_087_514_264_040_719_9,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    /// Uniform panels the interval is split into before adapting.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl<T: Scalar> Default for QuadOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::c(1e-10).max(T::tol_floor()),
            rel_tol: T::c(1e-12).max(T::tol_floor()),
            initial_panels: 1,
            max_panels: 4000,
        }
    }
}

impl<T: Scalar> QuadOptions<T> {
    pub fn with_abs_tol(mut self, tol: T) -> Self {
        self.abs_tol = tol.max(T::tol_floor());
        self
    }

    pub fn with_panels(mut self, n: usize) -> Self {
        self.initial_panels = n.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: T,
    pub converged: bool,
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk15<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::c(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half_len * T::c(x);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::c(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::c(WG[j / 2]) * pair;
        }
    }
    let value = kronrod * half_len;
    let err = ((kronrod - gauss) * half_len).abs();
    (value, err)
}

/// Globally adaptive G7K15 on a finite interval. Panels with the largest error
/// estimate are bisected until the total estimate meets
/// `max(abs_tol, rel_tol·|value|)`.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, opts: &QuadOptions<T>) -> QuadResult<T> {
    if a == b {
        return QuadResult { value: T::zero(), abs_error: T::zero(), converged: true };
    }
    if b < a {
        let r = integrate(f, b, a, opts);
        return QuadResult { value: -r.value, ..r };
    }
    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / T::c(n0 as f64);
    let mut panels: Vec<Panel<T>> = (0..n0)
        .map(|i| {
            let lo = a + width * T::c(i as f64);
            let hi = if i + 1 == n0 { b } else { lo + width };
            let (value, error) = gk15(&mut f, lo, hi);
            Panel { a: lo, b: hi, value, error }
        })
        .collect();
    loop {
        let total: T = panels.iter().fold(T::zero(), |acc, p| acc + p.value);
        let err: T = panels.iter().fold(T::zero(), |acc, p| acc + p.error);
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target || !total.is_finite() {
            return QuadResult { value: total, abs_error: err, converged: total.is_finite() };
        }
        if panels.len() >= opts.max_panels {
            return QuadResult { value: total, abs_error: err, converged: false };
        }
        let (worst, _) =
            panels
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, be), (i, p)| if p.error > be { (i, p.error) } else { (bi, be) });
        let p = panels.swap_remove(worst);
        let mid = T::c(0.5) * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // interval exhausted at machine precision; keep it as is
            panels.push(Panel { error: T::zero(), ..p });
            continue;
        }
        let (v1, e1) = gk15(&mut f, p.a, mid);
        let (v2, e2) = gk15(&mut f, mid, p.b);
        panels.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }
}

/// ∫₀ᵇ f with f(x) ~ x^e near 0 (e > −1), via x = b·v^{1/(1+e)}.
pub fn integrate_power_at_zero<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    b: T,
    e: T,
    opts: &QuadOptions<T>,
) -> QuadResult<T> {
    let p = T::one() / (T::one() + e);
    integrate(
        |v: T| {
            let x = b * v.powf(p);
            if x <= T::zero() {
                return T::zero();
            }
            f(x) * b * p * v.powf(p - T::one())
        },
        T::zero(),
        T::one(),
        opts,
    )
}

/// ∫ₐ^∞ f for f(x) ~ x^{−1−γ} (γ > 0), via x = a·w^{−1/γ}.
pub fn integrate_power_tail<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    gamma: T,
    opts: &QuadOptions<T>,
) -> QuadResult<T> {
    let q = T::one() / gamma;
    integrate(
        |w: T| {
            let x = a * w.powf(-q);
            if !x.is_finite() {
                return T::zero();
            }
            let jac = a * q * w.powf(-q - T::one());
            let v = f(x) * jac;
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        T::zero(),
        T::one(),
        opts,
    )
}

/// ∫ₐ^∞ f for f(x) decaying at least like e^{−rate·x}, via x = a − ln(v)/rate.
pub fn integrate_exp_tail<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    rate: T,
    opts: &QuadOptions<T>,
) -> QuadResult<T> {
    integrate(
        |v: T| {
            let x = a - v.ln() / rate;
            let r = f(x) / (rate * v);
            if r.is_finite() {
                r
            } else {
                T::zero()
            }
        },
        T::zero(),
        T::one(),
        opts,
    )
}
