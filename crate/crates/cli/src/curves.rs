//! Activation values and first derivatives sampled on a grid, for plotting.

use std::path::Path;

use erfact_core::ActivationKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub kinds: Vec<ActivationKind>,
    /// First parameter values (alpha, gamma, PReLU slope, Swish beta).
    pub first: Vec<f64>,
    /// Second parameter values (beta, delta).
    pub second: Vec<f64>,
    pub xmin: f64,
    pub xmax: f64,
    pub step: f64,
}

/// `(column label, kind, params)` for every curve, in column order.
pub fn combinations(spec: &CurveSpec) -> Vec<(String, ActivationKind, Vec<f64>)> {
    let mut out = Vec::new();
    for &kind in &spec.kinds {
        let sets: Vec<Vec<f64>> = match kind.param_arity() {
            0 => vec![Vec::new()],
            1 => spec.first.iter().map(|&a| vec![a]).collect(),
            _ => spec
                .first
                .iter()
                .flat_map(|&a| spec.second.iter().map(move |&b| vec![a, b]))
                .collect(),
        };
        for p in sets {
            let label = if p.is_empty() {
                kind.name().to_string()
            } else {
                let vals: Vec<String> = p.iter().map(f64::to_string).collect();
                format!("{}({})", kind.name(), vals.join(";"))
            };
            out.push((label, kind, p));
        }
    }
    out
}

pub fn grid(spec: &CurveSpec) -> Result<Vec<f64>, CliError> {
    if !(spec.step > 0.0
        && spec.xmax >= spec.xmin
        && spec.xmin.is_finite()
        && spec.xmax.is_finite())
    {
        return Err(CliError::Usage(format!(
            "empty x range [{}, {}] with step {}",
            spec.xmin, spec.xmax, spec.step
        )));
    }
    let n = ((spec.xmax - spec.xmin) / spec.step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| spec.xmin + i as f64 * spec.step).collect())
}

/// CSV text: `x`, then `label` and `d_label` for each combination.
pub fn curves_csv(spec: &CurveSpec) -> Result<String, CliError> {
    let xs = grid(spec)?;
    let combos = combinations(spec);
    if combos.is_empty() {
        return Err(CliError::Usage("no activation curves requested".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string()];
    for (label, _, _) in &combos {
        header.push(label.clone());
        header.push(format!("d_{label}"));
    }
    w.write_record(&header)?;
    for &x in &xs {
        let mut row = vec![x.to_string()];
        for (_, kind, p) in &combos {
            row.push(kind.forward(x, p).to_string());
            row.push(kind.dx(x, p).to_string());
        }
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn write_curves(spec: &CurveSpec, out: &Path) -> Result<(), CliError> {
    let text = curves_csv(spec)?;
    std::fs::write(out, text).map_err(|e| CliError::io(out, e))
}
