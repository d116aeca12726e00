#![allow(clippy::excessive_precision)]

//! Scalar kernels shared by every activation.
//!
//! Every function here is total on finite inputs: no NaN and no infinity
//! escapes for a finite argument.

use std::f64::consts::FRAC_2_SQRT_PI;

/// Largest argument for which `exp` is finite in 64-bit floating point.
pub const EXP_CLAMP: f64 = 709.0;

// The erf approximation below is the piecewise rational scheme of FreeBSD's
// msun/src/s_erf.c, which came with this notice:
//
// ====================================================
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this
// software is freely granted, provided that this notice
// is preserved.
// ====================================================
//
// Regions (on |x|):
//   [0, 0.84375)      erf(x) = x + x*P(x^2)/Q(x^2)
//   [0.84375, 1.25)   erf(x) = c + P1(s)/Q1(s), s = x - 1
//   [1.25, 1/0.35)    erf(x) = 1 - exp(-x^2 - 0.5625 + R1/S1)/x, z = 1/x^2
//   [1/0.35, 6)       erf(x) = 1 - exp(-x^2 - 0.5625 + R2/S2)/x
//   [6, inf)          erf(x) = 1
// The original splits -x^2 across two exponentials to get erfc to full
// relative precision; only erf is needed here, so one exponential is used.

const ERX: f64 = 8.45062911510467529297e-01;

const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];

const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];

const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];

const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

const LN2_HI: f64 = 6.93147180369123816490e-01;
const LN2_LO: f64 = 1.90821492927058770002e-10;
const LOG2_E: f64 = std::f64::consts::LOG2_E;
/// `1.5 * 2^52`: adding and subtracting it rounds to the nearest integer and
/// leaves that integer in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

// Natural-log kernel coefficients, from the same SunPro msun sources (e_log.c).
const LG: [f64; 7] = [
    6.666666666666735130e-01,
    3.999999999940941908e-01,
    2.857142874366239149e-01,
    2.222219843214978396e-01,
    1.818357216161805012e-01,
    1.531383769920937332e-01,
    1.479819860511658591e-01,
];

// Taylor coefficients 1/k! for k = 2..=13.
const EXP_TAYLOR: [f64; 12] = [
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
    1.0 / 39916800.0,
    1.0 / 479001600.0,
    1.0 / 6227020800.0,
];

#[inline(always)]
fn sel(c: bool, a: f64, b: f64) -> f64 {
    if c {
        a
    } else {
        b
    }
}

/// `a * b + c`, fused when the target has FMA.
#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, c)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + c
    }
}

/// Horner evaluation of `c[0] + c[1] z + ... + c[n-1] z^(n-1)`.
#[inline(always)]
fn poly(z: f64, c: &[f64]) -> f64 {
    let (last, rest) = c.split_last().expect("nonempty");
    rest.iter().rev().fold(*last, |acc, &k| madd(acc, z, k))
}

/// Horner evaluation with per-lane choice between two coefficient sets of
/// equal length.
#[inline(always)]
fn poly_sel(z: f64, pick_a: bool, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() - 1;
    a[..n]
        .iter()
        .zip(&b[..n])
        .rev()
        .fold(sel(pick_a, a[n], b[n]), |acc, (&ka, &kb)| {
            madd(acc, z, sel(pick_a, ka, kb))
        })
}

/// `e^x` without branches, so loops over it vectorize. Returns exactly 0
/// below `-745.2` and saturates to `e^709.78` above the overflow point.
/// Error is about one ulp.
#[inline(always)]
fn exp_kernel(x: f64) -> f64 {
    let xc = x.clamp(-746.0, 709.78);
    let kf = (xc * LOG2_E + ROUND_MAGIC) - ROUND_MAGIC;
    let r = (xc - kf * LN2_HI) - kf * LN2_LO;
    let p = madd(r * r, poly(r, &EXP_TAYLOR), 1.0 + r);
    // 2^k as two factors so that k down to -1076 stays representable.
    let k = (kf + ROUND_MAGIC).to_bits() as i64 - ROUND_MAGIC.to_bits() as i64;
    let k1 = k >> 1;
    let k2 = k - k1;
    let s1 = f64::from_bits(((k1 + 1023) as u64) << 52);
    let s2 = f64::from_bits(((k2 + 1023) as u64) << 52);
    sel(x < -745.2, 0.0, p * s1 * s2)
}

/// `ln(1 + e)` for `e` in `[0, 1]`, without branches.
#[inline(always)]
fn ln_1p_unit(e: f64) -> f64 {
    // 1 + e = 2^k (1 + f) with 1 + f in [sqrt(1/2), sqrt(2)].
    let halve = e > std::f64::consts::SQRT_2 - 1.0;
    let f = sel(halve, (e - 1.0) * 0.5, e);
    let k = sel(halve, 1.0, 0.0);
    let s = f / (2.0 + f);
    let z = s * s;
    let w = z * z;
    let r =
        z * (LG[0] + w * (LG[2] + w * (LG[4] + w * LG[6]))) + w * (LG[1] + w * (LG[3] + w * LG[5]));
    let hfsq = 0.5 * f * f;
    k * LN2_HI - ((hfsq - (s * (hfsq + r) + k * LN2_LO)) - f)
}

/// erf on `|x|`; the sign is applied by the caller. Both rational pairs are
/// evaluated, and the quotient is taken once after choosing between them.
#[inline(always)]
fn erf_abs(x: f64) -> f64 {
    const PP7: [f64; 7] = [PP[0], PP[1], PP[2], PP[3], PP[4], 0.0, 0.0];
    const QQ6: [f64; 6] = [QQ[0], QQ[1], QQ[2], QQ[3], QQ[4], 0.0];
    const RB8: [f64; 8] = [RB[0], RB[1], RB[2], RB[3], RB[4], RB[5], RB[6], 0.0];
    const SB8: [f64; 8] = [SB[0], SB[1], SB[2], SB[3], SB[4], SB[5], SB[6], 0.0];

    let mid = x >= 0.84375;
    let t = sel(mid, x - 1.0, x * x);
    let p_near = poly_sel(t, mid, &PA, &PP7);
    let q_near = madd(t, poly_sel(t, mid, &QA, &QQ6), 1.0);

    let xt = x.clamp(1.25, 6.0);
    let inv = 1.0 / xt;
    let s = inv * inv;
    let far = xt >= 1.0 / 0.35;
    let p_tail = poly_sel(s, far, &RB8, &RA);
    let q_tail = madd(s, poly_sel(s, far, &SB8, &SA), 1.0);

    let in_tail = x >= 1.25;
    let ratio = sel(in_tail, p_tail, p_near) / sel(in_tail, q_tail, q_near);
    let near = sel(mid, ERX + ratio, madd(x, ratio, x));
    let tail = 1.0 - exp_kernel(madd(-xt, xt, ratio - 0.5625)) * inv;
    sel(x >= 6.0, 1.0, sel(in_tail, tail, near))
}

/// Gauss error function, `2/sqrt(pi) * integral_0^x exp(-t^2) dt`.
///
/// Odd by construction (the magnitude is computed on `|x|` and the sign
/// reattached) and exactly `±1` for `|x| >= 6`. Absolute error is a few
/// units in the last place across the real line. Branch-free, so slice loops
/// over it vectorize.
#[inline(always)]
pub fn erf(x: f64) -> f64 {
    erf_abs(x.abs()).copysign(x)
}

/// `d/dx erf(x) = 2/sqrt(pi) * exp(-x^2)`. Exactly 0 for `|x|` beyond about
/// 27.3.
#[inline(always)]
pub fn erf_derivative(x: f64) -> f64 {
    FRAC_2_SQRT_PI * exp_kernel(-(x * x))
}

/// `e^(-t^2)`, exactly 0 once `t^2` passes 745.2.
#[inline(always)]
pub fn gauss(t: f64) -> f64 {
    exp_kernel(-(t * t))
}

/// `ln(1 + e^z)` as `max(z, 0) + ln(1 + e^-|z|)`; never overflows.
#[inline(always)]
pub fn softplus_stable(z: f64) -> f64 {
    z.max(0.0) + ln_1p_unit(exp_kernel(-z.abs()))
}

/// Softplus and logistic sigmoid of `z` from one shared exponential.
#[inline(always)]
pub fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let e = exp_kernel(-z.abs());
    let inv = 1.0 / (1.0 + e);
    (z.max(0.0) + ln_1p_unit(e), sel(z >= 0.0, inv, e * inv))
}

/// Logistic function, split by sign so the exponential never sees a
/// positive argument.
#[inline(always)]
pub fn sigmoid(z: f64) -> f64 {
    let e = exp_kernel(-z.abs());
    let inv = 1.0 / (1.0 + e);
    sel(z >= 0.0, inv, e * inv)
}

#[inline]
pub fn tanh(z: f64) -> f64 {
    z.tanh()
}

/// `exp` with its argument clamped to `[-709, 709]`, so the result is always
/// finite and nonzero.
#[inline(always)]
pub fn exp_guarded(z: f64) -> f64 {
    exp_kernel(z.clamp(-EXP_CLAMP, EXP_CLAMP))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_fixed_points() {
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(-0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert_eq!(erf(-1.0), -erf(1.0));
        assert!((erf(6.0) - 1.0).abs() <= 1e-9);
        assert_eq!(erf(-6.0), -1.0);
        assert_eq!(erf(1e300), 1.0);
    }

    #[test]
    fn erf_region_boundaries_are_continuous() {
        for &b in &[0.84375, 1.25, 1.0 / 0.35, 6.0] {
            let lo = erf(b - 1e-12);
            let hi = erf(b);
            assert!((hi - lo).abs() < 1e-11, "jump at {b}: {lo} vs {hi}");
        }
    }

    #[test]
    fn erf_derivative_values() {
        assert_eq!(erf_derivative(0.0), FRAC_2_SQRT_PI);
        assert_eq!(erf_derivative(30.0), 0.0);
        assert!((erf_derivative(1.0) - 0.415_107_497_420_594_7).abs() < 1e-15);
        assert!(erf_derivative(5.0) > 0.0);
    }

    #[test]
    fn softplus_extremes() {
        assert_eq!(softplus_stable(0.0), std::f64::consts::LN_2);
        assert_eq!(softplus_stable(800.0), 800.0);
        assert_eq!(softplus_stable(-800.0), 0.0);
        assert!(softplus_stable(-30.0) > 0.0);
    }

    #[test]
    fn sigmoid_tanh_exp_guarded() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-745.0).is_finite());
        assert_eq!(tanh(0.0), 0.0);
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(exp_guarded(1000.0), 709f64.exp()) < 4e-16);
        assert!(exp_guarded(1000.0).is_finite());
        assert!(rel(exp_guarded(-1000.0), (-709f64).exp()) < 4e-16);
    }

    #[test]
    fn exp_kernel_tracks_std_exp() {
        let mut worst: f64 = 0.0;
        // Relative error is only meaningful for normal results.
        for i in 0..=200_000 {
            let x = -708.0 + 1417.0 * i as f64 / 200_000.0;
            let want = x.exp();
            worst = worst.max(((exp_kernel(x) - want) / want).abs());
        }
        assert!(worst < 5e-16, "worst relative error {worst:e}");
        assert_eq!(exp_kernel(0.0), 1.0);
        assert_eq!(exp_kernel(-746.0), 0.0);
        assert_eq!(exp_kernel(-1e300), 0.0);
        assert!(exp_kernel(-745.0) > 0.0);
        assert!(exp_kernel(1e300).is_finite());
    }

    #[test]
    fn ln_1p_unit_tracks_std() {
        let mut worst: f64 = 0.0;
        for i in 0..=100_000 {
            let e = i as f64 / 100_000.0;
            let want = e.ln_1p();
            if want > 0.0 {
                worst = worst.max(((ln_1p_unit(e) - want) / want).abs());
            }
        }
        assert!(worst < 3e-16, "worst relative error {worst:e}");
        assert_eq!(ln_1p_unit(0.0), 0.0);
        assert_eq!(ln_1p_unit(1e-300), 1e-300);
    }

    #[test]
    fn softplus_sigmoid_matches_separate_kernels() {
        for i in -400..=400 {
            let z = i as f64 * 0.1;
            assert_eq!(softplus_sigmoid(z), (softplus_stable(z), sigmoid(z)));
        }
    }
}
