use erfact_core::activation::backward_recorded;
use erfact_core::special;
use erfact_core::ActivationKind;
use erfact_oracle::checks::{self, grid};
use erfact_oracle::{activation_ref, central_diff5, close, erf_ref};
use proptest::prelude::*;

fn assert_check(c: checks::Check) {
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn proposed_derivatives_match_finite_differences() {
    assert_check(checks::gradient_fidelity());
}

#[test]
fn degenerate_parameters_give_zero_and_linear_maps() {
    assert_check(checks::degenerate_identities());
}

#[test]
fn large_slope_approaches_relu() {
    assert_check(checks::relu_limit());
}

#[test]
fn unit_pserf_is_serf() {
    assert_check(checks::serf_equivalence());
}

#[test]
fn default_erfact_has_a_single_negative_bump() {
    assert_check(checks::shape_properties());
}

#[test]
fn erf_kernel_tracks_oracle() {
    assert_check(checks::erf_accuracy());
}

#[test]
fn erf_derivative_matches_gaussian() {
    for x in grid(-6.0, 6.0, 0.01) {
        let want = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        assert!((special::erf_derivative(x) - want).abs() <= 4.0 * f64::EPSILON * want.max(1e-300));
    }
}

#[test]
fn every_kind_matches_its_reference_formula() {
    for kind in ActivationKind::ALL {
        let p = kind.default_params();
        for x in grid(-30.0, 30.0, 0.013) {
            let (a, b) = (kind.forward(x, p), activation_ref(kind, x, p));
            assert!(close(a, b, 1e-14, 1e-13), "{kind} at {x}: {a} vs {b}");
        }
    }
}

#[test]
fn every_kind_differentiates_consistently() {
    for kind in ActivationKind::ALL {
        let p = kind.default_params().to_vec();
        for x in grid(-6.0, 6.0, 0.07) {
            // Skip the neighbourhood of kinks, where the difference quotient
            // straddles two pieces.
            if kind.kinks().iter().any(|k| (x - k).abs() < 1e-2) {
                continue;
            }
            let n = central_diff5(|t| activation_ref(kind, t, &p), x, 1e-3);
            let a = kind.dx(x, &p);
            assert!(close(a, n, 1e-9, 1e-6), "{kind} dx at {x}: {a} vs {n}");
            let dp = kind.dparams(x, &p);
            for k in 0..kind.param_arity() {
                let n = central_diff5(
                    |t| {
                        let mut q = p.clone();
                        q[k] = t;
                        activation_ref(kind, x, &q)
                    },
                    p[k],
                    1e-3,
                );
                assert!(
                    close(dp[k], n, 1e-9, 1e-6),
                    "{kind} dp{k} at {x}: {} vs {n}",
                    dp[k]
                );
            }
        }
    }
}

#[test]
fn far_tails_stay_finite() {
    for kind in ActivationKind::ALL {
        let p = kind.default_params();
        for x in [-1e6, -745.0, -50.0, 50.0, 745.0, 1e6] {
            let v = kind.forward(x, p);
            let d = kind.dx(x, p);
            let dp = kind.dparams(x, p);
            assert!(v.is_finite() && d.is_finite(), "{kind} at {x}");
            assert!(dp.iter().all(|g| g.is_finite()), "{kind} at {x}");
        }
    }
    // Large positive x: ErfAct saturates to the identity.
    assert_eq!(ActivationKind::ErfAct.forward(1e6, &[0.75, 0.75]), 1e6);
}

#[test]
fn erf_extreme_values() {
    assert_eq!(special::erf(0.0), 0.0);
    assert!(special::erf(-0.0).is_sign_negative());
    assert_eq!(special::erf(7.0), 1.0);
    assert_eq!(special::erf(-40.0), -1.0);
    assert_eq!(special::erf(f64::INFINITY), 1.0);
    assert_eq!(special::erf(f64::NEG_INFINITY), -1.0);
    assert!(special::erf(f64::NAN).is_nan());
    // Below 2^-28 erf(x) = 2x/sqrt(pi) to double precision.
    let x = 1e-12;
    assert!((special::erf(x) - erf_ref(x)).abs() <= f64::EPSILON * erf_ref(x));
}

proptest! {
    #[test]
    fn erf_is_odd_and_bounded(x in -50.0f64..50.0) {
        let e = special::erf(x);
        prop_assert_eq!(special::erf(-x), -e);
        prop_assert!(e.abs() <= 1.0);
    }

    #[test]
    fn erf_is_monotone(x in -6.0f64..6.0, dx in 1e-6f64..1.0) {
        prop_assert!(special::erf(x + dx) >= special::erf(x));
    }

    #[test]
    fn erf_matches_oracle_anywhere(x in -30.0f64..30.0) {
        prop_assert!((special::erf(x) - erf_ref(x)).abs() <= 2e-15);
    }

    #[test]
    fn activations_vanish_at_origin_for_any_parameters(
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        prop_assert_eq!(ActivationKind::ErfAct.forward(0.0, &[a, b]), 0.0);
        prop_assert_eq!(ActivationKind::Pserf.forward(0.0, &[a, b]), 0.0);
    }

    #[test]
    fn proposed_outputs_are_bounded_by_identity(
        x in -40.0f64..40.0,
        a in 0.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        // |x erf(z)| <= |x| for any z.
        for kind in [ActivationKind::ErfAct, ActivationKind::Pserf] {
            prop_assert!(kind.forward(x, &[a, b]).abs() <= x.abs());
        }
    }

    #[test]
    fn recorded_backward_is_a_dot_product(
        xs in prop::collection::vec(-8.0f64..8.0, 1..300),
        a in 0.1f64..2.0,
        b in 0.1f64..2.0,
    ) {
        for kind in [ActivationKind::ErfAct, ActivationKind::Pserf] {
            let n = xs.len();
            let (mut y, mut dx) = (vec![0.0; n], vec![0.0; n]);
            let (mut d0, mut d1) = (vec![0.0; n], vec![0.0; n]);
            kind.forward_record(&[a, b], &xs, &mut y, &mut dx, [&mut d0, &mut d1]);
            let up: Vec<f64> = (0..n).map(|i| ((i * 31 % 17) as f64 - 8.0) / 8.0).collect();
            let mut din = vec![0.0; n];
            let g = backward_recorded(&up, &dx, [&d0, &d1], &mut din);
            let mut want = [0.0; 2];
            for i in 0..n {
                let dp = kind.dparams(xs[i], &[a, b]);
                want[0] += up[i] * dp[0];
                want[1] += up[i] * dp[1];
                prop_assert!((din[i] - up[i] * kind.dx(xs[i], &[a, b])).abs() <= 1e-12);
            }
            for k in 0..2 {
                prop_assert!((g[k] - want[k]).abs() <= 1e-9 * (1.0 + want[k].abs()));
            }
        }
    }
}
