//! The numeric acceptance checks. Each returns a [`Check`] so that test
//! targets can both assert on it and print a one-line summary.

use std::time::Instant;

use erfact_core::nn::{InitScheme, Mode, Network, Preset};
use erfact_core::special;
use erfact_core::{ActivationKind, Tensor};

use crate::{activation_ref, central_diff, central_diff5, close, erf_ref, softplus_ref};

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    fn new(pass: bool, detail: String, started: Instant) -> Self {
        Check {
            pass,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Points `lo, lo + step, ..., hi` computed by index so the grid is exact.
pub fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

/// Analytic dx and parameter partials of ErfAct and Pserf against
/// finite differences of the reference formulas.
pub fn gradient_fidelity() -> Check {
    let started = Instant::now();
    let (atol, rtol, h) = (1e-9, 1e-6, 2.5e-4);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut failures = Vec::new();
    let mut points = 0usize;
    for kind in [ActivationKind::ErfAct, ActivationKind::Pserf] {
        for p0 in [0.25, 0.75, 1.25] {
            for p1 in [0.5, 0.85, 2.0] {
                for x in grid(-5.0, 5.0, 0.1) {
                    let p = [p0, p1];
                    let dp = kind.dparams(x, &p);
                    let pairs = [
                        (
                            kind.dx(x, &p),
                            central_diff5(|t| activation_ref(kind, t, &p), x, h),
                        ),
                        (
                            dp[0],
                            central_diff5(|t| activation_ref(kind, x, &[t, p1]), p0, h),
                        ),
                        (
                            dp[1],
                            central_diff5(|t| activation_ref(kind, x, &[p0, t]), p1, h),
                        ),
                    ];
                    for (which, (a, n)) in pairs.into_iter().enumerate() {
                        points += 1;
                        let excess = (a - n).abs() / (atol + rtol * n.abs());
                        if excess > worst {
                            worst = excess;
                            worst_at = format!(
                                "{kind} d{which} at x={x:.1}, p=({p0}, {p1}): {a:e} vs {n:e}"
                            );
                        }
                        if !close(a, n, atol, rtol) && failures.len() < 5 {
                            failures.push(format!(
                                "{kind} p=({p0},{p1}) x={x:.1} d{which}: {a} vs {n}"
                            ));
                        }
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed < 5.0;
    let detail = if failures.is_empty() {
        format!("{points} derivatives, worst {worst:.3} of tolerance ({worst_at})")
    } else {
        failures.join("; ")
    };
    Check::new(pass, detail, started)
}

/// Deterministic `[n, 1, 8, 8]` batch and labels for the network check.
pub fn synthetic_batch(n: usize, classes: usize) -> (Tensor, Vec<usize>) {
    let x = Tensor::from_fn(&[n, 1, 8, 8], |i| {
        let t = i as f64;
        (0.37 * t).sin() + 0.5 * (0.11 * t * t).cos()
    });
    let y = (0..n).map(|i| (i * 7 + 1) % classes).collect();
    (x, y)
}

/// Backpropagated gradients of every parameter of the gradcheck network
/// for `kind`, compared with two-sided differences of the loss.
/// Returns the worst `|a - n| / (1e-6 + 1e-4 |n|)` and a failure note.
pub fn network_gradients(kind: ActivationKind, mode: Mode) -> (f64, Option<String>) {
    let classes = 3;
    let spec = Preset::GradCheck.spec(kind, None, [1, 8, 8], classes);
    let mut net = spec.build().expect("gradcheck preset builds");
    net.init_weights(InitScheme::HeNormal, 11);
    // Move the activation parameters off their defaults so that no slot
    // of the parameter gradient is trivially symmetric.
    for slot in net.params_mut() {
        if slot.role == erfact_core::nn::ParamRole::Activation {
            for (k, v) in slot.values.iter_mut().enumerate() {
                *v *= 1.0 + 0.1 * (k as f64 + 1.0) * (slot.layer as f64 + 1.0) / 10.0;
            }
        }
    }
    let (x, y) = synthetic_batch(8, classes);
    let analytic = {
        let (logits, cache) = net.forward(&x, mode).expect("forward");
        let (_, dlogits) = erfact_core::nn::softmax_cross_entropy(&logits, &y).expect("loss");
        net.backward(&cache, &dlogits).expect("backward")
    };
    let (h, atol, rtol) = (1e-6, 1e-6, 1e-4);
    let mut worst: f64 = 0.0;
    let mut note = None;
    for (slot_idx, entry) in analytic.entries.iter().enumerate() {
        for (k, &a) in entry.values.iter().enumerate() {
            let loss_at = |net: &mut Network, v: f64| {
                net.params_mut()[slot_idx].values[k] = v;
                net.loss(&x, &y).expect("loss")
            };
            let v0 = net.params()[slot_idx].2[k];
            let n = central_diff(|v| loss_at(&mut net.clone(), v), v0, h);
            let excess = (a - n).abs() / (atol + rtol * n.abs());
            worst = worst.max(excess);
            if excess > 1.0 && note.is_none() {
                note = Some(format!(
                    "{kind} layer {} {:?}[{k}]: analytic {a} vs numeric {n}",
                    entry.layer, entry.role
                ));
            }
        }
    }
    (worst, note)
}

/// Whole-network check over every activation kind.
pub fn whole_network_gradients() -> Check {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for kind in ActivationKind::ALL {
        let (w, note) = network_gradients(kind, Mode::Train { seed: 0 });
        worst = worst.max(w);
        notes.extend(note);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = notes.is_empty() && elapsed < 60.0;
    let detail = if notes.is_empty() {
        format!(
            "{} activation kinds, worst error {worst:.3} of tolerance",
            ActivationKind::ALL.len()
        )
    } else {
        notes.join("; ")
    };
    Check::new(pass, detail, started)
}

fn ulps_apart(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / (scale * f64::EPSILON)
    }
}

/// Zero-scale and zero-slope forms.
pub fn degenerate_identities() -> Check {
    let started = Instant::now();
    let erfact = |x, a, b| ActivationKind::ErfAct.forward(x, &[a, b]);
    let pserf = |x, g, d| ActivationKind::Pserf.forward(x, &[g, d]);
    let mut worst_ulps: f64 = 0.0;
    let mut failures = Vec::new();
    let slopes = [-2.0, -0.5, 0.0, 0.85, 3.0];
    let scales = [-1.5, 0.25, 0.75, 1.25, 4.0];
    for x in grid(-20.0, 20.0, 0.05) {
        for s in slopes {
            if erfact(x, 0.0, s) != 0.0 || pserf(x, 0.0, s) != 0.0 {
                failures.push(format!("zero scale not zero at x={x}, slope={s}"));
            }
        }
        for c in scales {
            let u1 = ulps_apart(erfact(x, c, 0.0), x * special::erf(c));
            let u2 = ulps_apart(
                pserf(x, c, 0.0),
                x * special::erf(c * std::f64::consts::LN_2),
            );
            worst_ulps = worst_ulps.max(u1).max(u2);
            if u1 > 4.0 || u2 > 4.0 {
                failures.push(format!(
                    "linear form off by {u1:.1}/{u2:.1} ulp at x={x}, c={c}"
                ));
            }
        }
    }
    // The kernel's erf at the constants themselves, against the oracle.
    for c in scales {
        for arg in [c, c * std::f64::consts::LN_2] {
            let u = ulps_apart(special::erf(arg), erf_ref(arg));
            worst_ulps = worst_ulps.max(u);
            if u > 8.0 {
                failures.push(format!("erf({arg}) off by {u:.1} ulp"));
            }
        }
    }
    failures.truncate(5);
    let pass = failures.is_empty();
    let detail = if pass {
        format!("zero forms exact, linear forms within {worst_ulps:.1} ulp")
    } else {
        failures.join("; ")
    };
    Check::new(pass, detail, started)
}

/// Large slope approaches max(x, 0).
pub fn relu_limit() -> Check {
    let started = Instant::now();
    let mut gap: [f64; 2] = [0.0; 2];
    for x in grid(-5.0, 5.0, 0.01) {
        let r = x.max(0.0);
        gap[0] = gap[0].max((ActivationKind::ErfAct.forward(x, &[1.0, 50.0]) - r).abs());
        gap[1] = gap[1].max((ActivationKind::Pserf.forward(x, &[1.0, 50.0]) - r).abs());
    }
    let pass = gap[0] <= 0.02 && gap[1] <= 0.02;
    Check::new(
        pass,
        format!(
            "max gap ErfAct {:.5}, Pserf {:.5} (limit 0.02)",
            gap[0], gap[1]
        ),
        started,
    )
}

/// Pserf at unit parameters against x erf(softplus(x)) from the oracle.
pub fn serf_equivalence() -> Check {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for x in grid(-20.0, 20.0, 0.01) {
        let a = ActivationKind::Pserf.forward(x, &[1.0, 1.0]);
        let b = x * erf_ref(softplus_ref(x));
        let c = ActivationKind::Serf.forward(x, &[]);
        worst = worst.max((a - b).abs()).max((a - c).abs());
    }
    Check::new(
        worst <= 1e-12,
        format!("max difference {worst:.3e} (limit 1e-12)"),
        started,
    )
}

/// Negative bump, single turning point and linear growth at default init.
pub fn shape_properties() -> Check {
    let started = Instant::now();
    let p = ActivationKind::ErfAct.default_params();
    let xs: Vec<f64> = grid(-10.0, 0.0, 0.001).collect();
    let min = xs
        .iter()
        .map(|&x| ActivationKind::ErfAct.forward(x, p))
        .fold(f64::INFINITY, f64::min);
    let mut changes = 0;
    let mut prev = ActivationKind::ErfAct.dx(xs[0], p);
    let mut at = f64::NAN;
    for &x in &xs[1..] {
        let d = ActivationKind::ErfAct.dx(x, p);
        if (d < 0.0) != (prev < 0.0) && d != 0.0 && prev != 0.0 {
            changes += 1;
            at = x;
        }
        prev = d;
    }
    let ratio = ActivationKind::ErfAct.forward(100.0, p) / 100.0;
    let pass = min < 0.0 && changes == 1 && (1.0 - 1e-6..=1.0).contains(&ratio);
    Check::new(
        pass,
        format!(
            "minimum {min:.6}, {changes} derivative sign change(s) (near x = {at:.3}), f(100)/100 = {ratio}"
        ),
        started,
    )
}

/// Kernel erf against the series/continued-fraction oracle.
pub fn erf_accuracy() -> Check {
    let started = Instant::now();
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for i in 0..n {
        let x = -10.0 + 20.0 * i as f64 / (n - 1) as f64;
        let e = (special::erf(x) - erf_ref(x)).abs();
        if e > worst {
            worst = e;
            at = x;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    Check::new(
        worst <= 1e-7 && elapsed < 2.0,
        format!("{n} points, max error {worst:.3e} at x = {at:.4}"),
        started,
    )
}
