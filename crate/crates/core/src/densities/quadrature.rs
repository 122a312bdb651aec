//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

fn kronrod<T: Scalar, F: Fn(T) -> T>(f: &F, lo: T, hi: T) -> (T, T) {
    let half = (hi - lo) / T::lit(2.0);
    let mid = lo + half;
    let fc = f(mid);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod = kronrod + pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<T: Scalar, F: Fn(T) -> T>(f: &F, lo: T, hi: T, tol: T, depth: u32) -> T {
    let (value, err) = kronrod(f, lo, hi);
    if !value.is_finite() || err <= tol || depth >= MAX_DEPTH {
        return value;
    }
    let mid = (lo + hi) / T::lit(2.0);
    adapt(f, lo, mid, tol / T::lit(2.0), depth + 1)
        + adapt(f, mid, hi, tol / T::lit(2.0), depth + 1)
}

/// `∫_lo^hi f` to absolute tolerance `tol`.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> T {
    if !(hi > lo) {
        return T::zero();
    }
    adapt(&f, lo, hi, tol, 0)
}

/// Integrates over consecutive segments of `knots`, splitting the tolerance
/// by segment length so kinks and jumps never sit inside a panel.
pub fn integrate_piecewise<T: Scalar, F: Fn(T) -> T>(f: F, knots: &[T], tol: T) -> T {
    knots
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], tol * (w[1] - w[0]).max(T::epsilon())))
        .sum()
}
