//! Finite-difference verification of every activation derivative and of
//! whole-network gradients.

use erfact_core::nn::{softmax_cross_entropy, InitScheme, Mode, Network, Preset};
use erfact_core::{ActivationKind, Tensor};

use crate::error::CliError;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    /// Routine under test, e.g. `erfact_dx` or `pserf_network`.
    pub routine: String,
    pub kind: ActivationKind,
    pub max_rel_error: f64,
    /// Where the largest error occurred.
    pub worst_at: String,
}

impl CheckRow {
    pub fn pass(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn diff5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Parameter settings checked for `kind`.
fn param_grid(kind: ActivationKind) -> Vec<Vec<f64>> {
    match kind.param_arity() {
        2 => [0.25, 0.75, 1.25]
            .iter()
            .flat_map(|&a| [0.5, 0.85, 2.0].map(|b| vec![a, b]))
            .collect(),
        1 => [0.1, 0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|&p| vec![p])
            .collect(),
        _ => vec![Vec::new()],
    }
}

pub fn routine_names(kind: ActivationKind) -> Vec<String> {
    let mut names = vec![format!("{}_dx", kind.name())];
    if kind.param_arity() > 0 {
        names.push(format!("{}_dparams", kind.name()));
    }
    names.push(format!("{}_network", kind.name()));
    names
}

fn track(row: &mut CheckRow, err: f64, at: impl FnOnce() -> String) {
    if err > row.max_rel_error || err.is_nan() {
        row.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
        row.worst_at = at();
    }
}

/// dx and dparams of `kind` over x in [-5, 5] (step 0.1) and its parameter
/// grid. `fault` names a routine whose analytic value is perturbed.
pub fn check_activation(kind: ActivationKind, fault: Option<&str>) -> Vec<CheckRow> {
    let (h, floor) = (1e-3, 1e-6);
    let bump = |routine: &str| {
        if fault == Some(routine) {
            1e-3
        } else {
            0.0
        }
    };
    let dx_name = format!("{}_dx", kind.name());
    let dp_name = format!("{}_dparams", kind.name());
    let mut dx_row = CheckRow {
        routine: dx_name.clone(),
        kind,
        max_rel_error: 0.0,
        worst_at: String::new(),
    };
    let mut dp_row = CheckRow {
        routine: dp_name.clone(),
        ..dx_row.clone()
    };
    for p in param_grid(kind) {
        for i in 0..=100 {
            let x = -5.0 + i as f64 * 0.1;
            if kind.kinks().iter().any(|k| (x - k).abs() < 4.0 * h) {
                continue;
            }
            let n = diff5(|t| kind.forward(t, &p), x, h);
            let a = kind.dx(x, &p) + bump(&dx_name);
            track(&mut dx_row, rel_error(a, n, floor), || {
                format!("x={x:.1} params={p:?}")
            });
            let dp = kind.dparams(x, &p);
            for k in 0..p.len() {
                let n = diff5(
                    |t| {
                        let mut q = p.clone();
                        q[k] = t;
                        kind.forward(x, &q)
                    },
                    p[k],
                    h,
                );
                let a = dp[k] + bump(&dp_name);
                track(&mut dp_row, rel_error(a, n, floor), || {
                    format!("x={x:.1} params={p:?} param={}", kind.param_names()[k])
                });
            }
        }
    }
    let mut rows = vec![dx_row];
    if kind.param_arity() > 0 {
        rows.push(dp_row);
    }
    rows
}

/// Deterministic `[n, 1, 8, 8]` inputs with labels in `0..classes`.
pub fn gradcheck_batch(n: usize, classes: usize) -> (Tensor, Vec<usize>) {
    let x = Tensor::from_fn(&[n, 1, 8, 8], |i| {
        let t = i as f64;
        (0.29 * t).cos() - 0.4 * (0.07 * t * t + 1.0).sin()
    });
    (x, (0..n).map(|i| (i * 5 + 2) % classes).collect())
}

/// Every weight, bias and activation parameter of the two-conv, one-dense
/// gradcheck network on an 8x8 batch.
pub fn check_network(kind: ActivationKind, init: &[f64]) -> Result<CheckRow, CliError> {
    let classes = 3;
    let init = (init.len() == kind.param_arity()).then_some(init);
    let mut net = Preset::GradCheck
        .spec(kind, init, [1, 8, 8], classes)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    net.init_weights(InitScheme::HeNormal, 7);
    let (x, y) = gradcheck_batch(8, classes);
    let net_err = |e: erfact_core::nn::NetworkError| CliError::Usage(e.to_string());
    let (logits, cache) = net.forward(&x, Mode::Train { seed: 0 }).map_err(net_err)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &y).map_err(net_err)?;
    let grads = net.backward(&cache, &dlogits).map_err(net_err)?;
    let mut row = CheckRow {
        routine: format!("{}_network", kind.name()),
        kind,
        max_rel_error: 0.0,
        worst_at: String::new(),
    };
    let h = 1e-6;
    let mut probe: Network = net.clone();
    for (slot, entry) in grads.entries.iter().enumerate() {
        for (k, &a) in entry.values.iter().enumerate() {
            let v0 = probe.params()[slot].2[k];
            let mut loss_at = |v: f64| -> Result<f64, CliError> {
                probe.params_mut()[slot].values[k] = v;
                probe.loss(&x, &y).map_err(net_err)
            };
            let n = (loss_at(v0 + h)? - loss_at(v0 - h)?) / (2.0 * h);
            loss_at(v0)?;
            track(&mut row, rel_error(a, n, 1e-4), || {
                format!("layer {} {:?}[{k}]", entry.layer, entry.role)
            });
        }
    }
    Ok(row)
}

/// Runs all checks for `kinds`. `params` supplies each kind's initial
/// parameters for the network check.
pub fn run(
    kinds: &[ActivationKind],
    params: impl Fn(ActivationKind) -> Vec<f64>,
    fault: Option<&str>,
) -> Result<Vec<CheckRow>, CliError> {
    if kinds.is_empty() {
        return Err(CliError::Usage(
            "gradcheck needs at least one activation".into(),
        ));
    }
    if let Some(f) = fault {
        if !ActivationKind::ALL
            .iter()
            .any(|&k| routine_names(k).iter().any(|n| n == f))
        {
            return Err(CliError::Usage(format!(
                "unknown routine `{f}` for inject_fault"
            )));
        }
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        rows.extend(check_activation(kind, fault));
        rows.push(check_network(kind, &params(kind))?);
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[CheckRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["routine", "kind", "max_rel_error", "worst_at", "status"])?;
    for r in rows {
        w.write_record([
            r.routine.clone(),
            r.kind.name().to_string(),
            format!("{:.3e}", r.max_rel_error),
            r.worst_at.clone(),
            if r.pass() { "pass" } else { "FAIL" }.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// `Err(Check)` naming every failing routine, kind and location.
pub fn verdict(rows: &[CheckRow]) -> Result<(), CliError> {
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass())
        .map(|r| {
            format!(
                "{} ({}, {}): relative error {:.3e}",
                r.routine, r.kind, r.worst_at, r.max_rel_error
            )
        })
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failing.join("; ")))
    }
}
