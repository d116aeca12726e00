//! ErfAct `x * erf(alpha * e^(beta x))` and Pserf `x * erf(gamma * ln(1 + e^(delta x)))`.
//!
//! Input derivatives follow the closed forms directly. Parameter partials
//! come from the chain rule through `erf' = 2/sqrt(pi) e^(-t^2)`:
//!
//! ```text
//! ErfAct, u = alpha e^(beta x), g = e^(-u^2)
//!   df/dalpha = x (2/sqrt(pi)) g e^(beta x)
//!   df/dbeta  = x^2 (2/sqrt(pi)) g u
//! Pserf, s = softplus(delta x), v = gamma s, g = e^(-v^2)
//!   df/dgamma = x (2/sqrt(pi)) g s
//!   df/ddelta = x^2 gamma (2/sqrt(pi)) g sigmoid(delta x)
//! ```

use std::f64::consts::FRAC_2_SQRT_PI;

use crate::special::{erf, exp_guarded, gauss, sigmoid, softplus_sigmoid, softplus_stable};

/// Bound on the erf argument before it is squared. erf has saturated long
/// before this and `exp(-BOUND^2)` is exactly zero, so products with the
/// Gaussian factor collapse to 0 instead of `inf * 0`.
const ARG_BOUND: f64 = 1e150;

#[inline(always)]
fn bounded(t: f64) -> f64 {
    t.clamp(-ARG_BOUND, ARG_BOUND)
}

#[inline(always)]
pub fn erfact_forward(x: f64, alpha: f64, beta: f64) -> f64 {
    let u = bounded(alpha * exp_guarded(beta * x));
    x * erf(u)
}

#[inline(always)]
pub fn erfact_dx(x: f64, alpha: f64, beta: f64) -> f64 {
    let u = bounded(alpha * exp_guarded(beta * x));
    erf(u) + FRAC_2_SQRT_PI * (u * gauss(u)) * x * beta
}

/// Per-sample `(df/dalpha, df/dbeta)`.
#[inline(always)]
pub fn erfact_dparams(x: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let e = exp_guarded(beta * x);
    let u = bounded(alpha * e);
    let g = gauss(u);
    let d_alpha = FRAC_2_SQRT_PI * (g * e) * x;
    let d_beta = FRAC_2_SQRT_PI * (u * g) * x * x;
    (d_alpha, d_beta)
}

/// Forward value, input derivative and both parameter partials from one
/// evaluation of the shared subexpressions.
#[inline(always)]
pub fn erfact_fused(x: f64, alpha: f64, beta: f64) -> (f64, f64, f64, f64) {
    let e = exp_guarded(beta * x);
    let u = bounded(alpha * e);
    let g = gauss(u);
    let ug = FRAC_2_SQRT_PI * u * g;
    let erf_u = erf(u);
    (
        x * erf_u,
        erf_u + ug * x * beta,
        FRAC_2_SQRT_PI * (g * e) * x,
        ug * x * x,
    )
}

#[inline(always)]
pub fn pserf_forward(x: f64, gamma: f64, delta: f64) -> f64 {
    let v = bounded(gamma * softplus_stable(delta * x));
    x * erf(v)
}

#[inline(always)]
pub fn pserf_dx(x: f64, gamma: f64, delta: f64) -> f64 {
    let v = bounded(gamma * softplus_stable(delta * x));
    erf(v) + FRAC_2_SQRT_PI * gauss(v) * sigmoid(delta * x) * x * gamma * delta
}

/// Per-sample `(df/dgamma, df/ddelta)`.
#[inline(always)]
pub fn pserf_dparams(x: f64, gamma: f64, delta: f64) -> (f64, f64) {
    let s = softplus_stable(delta * x);
    let v = bounded(gamma * s);
    let g = FRAC_2_SQRT_PI * gauss(v);
    (g * s * x, g * sigmoid(delta * x) * gamma * x * x)
}

#[inline(always)]
pub fn pserf_fused(x: f64, gamma: f64, delta: f64) -> (f64, f64, f64, f64) {
    let (s, sig) = softplus_sigmoid(delta * x);
    let v = bounded(gamma * s);
    let g = FRAC_2_SQRT_PI * gauss(v);
    let erf_v = erf(v);
    (
        x * erf_v,
        erf_v + g * sig * x * gamma * delta,
        g * s * x,
        g * sig * gamma * x * x,
    )
}

/// The fixed activation `x * erf(softplus(x))`, written independently of
/// [`pserf_forward`].
#[inline(always)]
pub fn serf_forward(x: f64) -> f64 {
    x * erf(softplus_stable(x))
}

#[inline(always)]
pub fn serf_dx(x: f64) -> f64 {
    let s = softplus_stable(x);
    erf(s) + x * FRAC_2_SQRT_PI * (-(s * s)).exp() * sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_is_a_fixed_point() {
        for &(a, b) in &[(0.75, 0.75), (-3.0, 2.0), (1e6, -40.0)] {
            assert_eq!(erfact_forward(0.0, a, b), 0.0);
            assert_eq!(pserf_forward(0.0, a, b), 0.0);
            assert_eq!(erfact_dparams(0.0, a, b), (0.0, 0.0));
            assert_eq!(pserf_dparams(0.0, a, b), (0.0, 0.0));
        }
    }

    #[test]
    fn derivative_at_origin_is_erf_of_parameter_term() {
        assert_eq!(erfact_dx(0.0, 0.75, 0.75), erf(0.75));
        assert_eq!(
            pserf_dx(0.0, 1.25, 0.85),
            erf(1.25 * std::f64::consts::LN_2)
        );
    }

    #[test]
    fn far_negative_tail_vanishes() {
        assert!(erfact_dx(-40.0, 1.0, 1.0).abs() <= 1e-12);
        assert!(pserf_dx(-40.0, 1.0, 1.0).abs() <= 1e-10);
    }

    #[test]
    fn parameter_partials_at_zero_scale() {
        let (da, db) = erfact_dparams(1.0, 0.0, 1.0);
        assert!((da - std::f64::consts::E * FRAC_2_SQRT_PI).abs() < 1e-15);
        assert_eq!(db, 0.0);
        let (dg, dd) = pserf_dparams(2.0, 0.0, 1.0);
        assert!((dg - 2.0 * FRAC_2_SQRT_PI * softplus_stable(2.0)).abs() < 1e-15);
        assert_eq!(dd, 0.0);
    }

    #[test]
    fn saturated_arguments_stay_finite() {
        for &x in &[-700.0, -50.0, 50.0, 700.0] {
            for &(a, b) in &[(5.0, 3.0), (-5.0, 3.0), (1e300, 1.0), (0.75, -2.0)] {
                let (f, d, p, q) = erfact_fused(x, a, b);
                assert!(f.is_finite() && d.is_finite() && p.is_finite() && q.is_finite());
                let (f, d, p, q) = pserf_fused(x, a, b);
                assert!(f.is_finite() && d.is_finite() && p.is_finite() && q.is_finite());
            }
        }
    }

    #[test]
    fn fused_matches_separate_kernels() {
        for i in -50..=50 {
            let x = i as f64 * 0.1;
            let (f, d, p, q) = erfact_fused(x, 0.75, 0.75);
            assert_eq!(f, erfact_forward(x, 0.75, 0.75));
            assert!((d - erfact_dx(x, 0.75, 0.75)).abs() < 1e-15);
            let (pa, pb) = erfact_dparams(x, 0.75, 0.75);
            assert!((p - pa).abs() < 1e-14 && (q - pb).abs() < 1e-14);
            let (f, d, p, q) = pserf_fused(x, 1.25, 0.85);
            assert_eq!(f, pserf_forward(x, 1.25, 0.85));
            assert!((d - pserf_dx(x, 1.25, 0.85)).abs() < 1e-15);
            let (pa, pb) = pserf_dparams(x, 1.25, 0.85);
            assert!((p - pa).abs() < 1e-14 && (q - pb).abs() < 1e-14);
        }
    }
}
