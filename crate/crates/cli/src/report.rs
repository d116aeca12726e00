//! Per-seed training records, their aggregates and the CSV files they are
//! written to.
//!
//! `report.csv` holds one row per (activation, seed, epoch) and contains no
//! timing, so two runs with the same configuration produce identical bytes.
//! Wall-clock seconds go to `timing.csv`.

use std::path::Path;

use erfact_core::train::{EpochStats, RunOutcome};
use erfact_core::ActivationKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// `(layer, values)` per parametric activation layer.
    pub params: Vec<(usize, Vec<f64>)>,
}

impl From<&EpochStats> for EpochRecord {
    fn from(e: &EpochStats) -> Self {
        Self {
            epoch: e.epoch,
            lr: e.lr,
            train_loss: e.train_loss,
            test_loss: e.test_loss,
            test_accuracy: e.test_accuracy,
            params: e.activation_params.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub activation: ActivationKind,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub seconds: f64,
}

impl SeedRun {
    pub fn from_outcome(activation: ActivationKind, seed: u64, out: &RunOutcome) -> Self {
        Self {
            activation,
            seed,
            epochs: out.epochs.iter().map(EpochRecord::from).collect(),
            seconds: out.seconds,
        }
    }

    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("runs have at least one epoch")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub activation: ActivationKind,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub accuracy_min: f64,
    pub accuracy_max: f64,
    pub test_loss_mean: f64,
    pub test_loss_std: f64,
    pub train_loss_mean: f64,
    pub train_loss_std: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub runs: Vec<SeedRun>,
}

/// Mean and unbiased (n - 1) standard deviation. The deviation of a single
/// value is undefined and reported as NaN.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

const REPORT_HEADER: [&str; 8] = [
    "activation",
    "seed",
    "epoch",
    "lr",
    "train_loss",
    "test_loss",
    "test_accuracy",
    "activation_params",
];

fn format_params(params: &[(usize, Vec<f64>)]) -> String {
    params
        .iter()
        .map(|(layer, v)| {
            let vals: Vec<String> = v.iter().map(f64::to_string).collect();
            format!("{layer}:{}", vals.join("/"))
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_params(s: &str) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let bad = || CliError::Usage(format!("malformed activation_params `{s}`"));
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|entry| {
            let (layer, vals) = entry.split_once(':').ok_or_else(bad)?;
            let layer = layer.parse().map_err(|_| bad())?;
            let vals = vals
                .split('/')
                .map(|v| v.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            Ok((layer, vals))
        })
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, CliError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| CliError::Usage(format!("bad value `{raw}` in column {i}")))
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl RunReport {
    /// Aggregates of the final epoch, one per activation in first-seen order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut kinds: Vec<ActivationKind> = Vec::new();
        for r in &self.runs {
            if !kinds.contains(&r.activation) {
                kinds.push(r.activation);
            }
        }
        kinds
            .into_iter()
            .map(|kind| {
                let runs: Vec<&SeedRun> =
                    self.runs.iter().filter(|r| r.activation == kind).collect();
                let col = |f: fn(&EpochRecord) -> f64| -> Vec<f64> {
                    runs.iter().map(|r| f(r.last())).collect()
                };
                let acc = col(|e| e.test_accuracy);
                let (accuracy_mean, accuracy_std) = mean_std(&acc);
                let (test_loss_mean, test_loss_std) = mean_std(&col(|e| e.test_loss));
                let (train_loss_mean, train_loss_std) = mean_std(&col(|e| e.train_loss));
                Aggregate {
                    activation: kind,
                    runs: runs.len(),
                    accuracy_mean,
                    accuracy_std,
                    accuracy_min: acc.iter().copied().fold(f64::INFINITY, f64::min),
                    accuracy_max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    test_loss_mean,
                    test_loss_std,
                    train_loss_mean,
                    train_loss_std,
                }
            })
            .collect()
    }

    pub fn aggregate(&self, kind: ActivationKind) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| a.activation == kind)
    }

    pub fn report_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER)?;
        for r in &self.runs {
            for e in &r.epochs {
                w.write_record([
                    r.activation.name().to_string(),
                    r.seed.to_string(),
                    e.epoch.to_string(),
                    e.lr.to_string(),
                    e.train_loss.to_string(),
                    e.test_loss.to_string(),
                    e.test_accuracy.to_string(),
                    format_params(&e.params),
                ])?;
            }
        }
        to_string(w)
    }

    pub fn timing_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["activation", "seed", "seconds"])?;
        for r in &self.runs {
            w.write_record([
                r.activation.name().to_string(),
                r.seed.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        to_string(w)
    }

    pub fn summary_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "activation",
            "runs",
            "test_accuracy_mean",
            "test_accuracy_std",
            "test_accuracy_min",
            "test_accuracy_max",
            "test_loss_mean",
            "test_loss_std",
            "train_loss_mean",
            "train_loss_std",
        ])?;
        for a in self.aggregates() {
            w.write_record([
                a.activation.name().to_string(),
                a.runs.to_string(),
                a.accuracy_mean.to_string(),
                a.accuracy_std.to_string(),
                a.accuracy_min.to_string(),
                a.accuracy_max.to_string(),
                a.test_loss_mean.to_string(),
                a.test_loss_std.to_string(),
                a.train_loss_mean.to_string(),
                a.train_loss_std.to_string(),
            ])?;
        }
        to_string(w)
    }

    /// Inverse of [`report_csv`](Self::report_csv) plus, optionally,
    /// [`timing_csv`](Self::timing_csv). Without timing, seconds are 0.
    pub fn parse(report: &str, timing: Option<&str>) -> Result<Self, CliError> {
        let mut out = RunReport::default();
        let mut rdr = csv::Reader::from_reader(report.as_bytes());
        if rdr.headers()?.iter().ne(REPORT_HEADER) {
            return Err(CliError::Usage("unexpected report header".into()));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let activation: ActivationKind = rec[0]
                .parse()
                .map_err(|e| CliError::Usage(format!("{e}")))?;
            let seed = field(&rec, 1)?;
            let epoch = EpochRecord {
                epoch: field(&rec, 2)?,
                lr: field(&rec, 3)?,
                train_loss: field(&rec, 4)?,
                test_loss: field(&rec, 5)?,
                test_accuracy: field(&rec, 6)?,
                params: parse_params(&rec[7])?,
            };
            match out.runs.last_mut() {
                Some(r) if r.activation == activation && r.seed == seed => r.epochs.push(epoch),
                _ => out.runs.push(SeedRun {
                    activation,
                    seed,
                    epochs: vec![epoch],
                    seconds: 0.0,
                }),
            }
        }
        if let Some(timing) = timing {
            let mut rdr = csv::Reader::from_reader(timing.as_bytes());
            for rec in rdr.records() {
                let rec = rec?;
                let seed: u64 = field(&rec, 1)?;
                let run = out
                    .runs
                    .iter_mut()
                    .find(|r| r.activation.name() == &rec[0] && r.seed == seed)
                    .ok_or_else(|| CliError::Usage(format!("timing for unknown run {rec:?}")))?;
                run.seconds = field(&rec, 2)?;
            }
        }
        Ok(out)
    }

    /// Writes `report.csv`, `timing.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, text) in [
            ("report.csv", self.report_csv()?),
            ("timing.csv", self.timing_csv()?),
            ("summary.csv", self.summary_csv()?),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}
