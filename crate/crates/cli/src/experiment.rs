//! Training comparisons: every activation is trained from the same initial
//! weights for each seed, and the final-epoch metrics are aggregated.

use std::path::PathBuf;
use std::sync::Mutex;

use erfact_core::data::{load_idx_dir, synth_classification, Dataset};
use erfact_core::train::train;
use erfact_core::ActivationKind;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::CliError;
use crate::report::{RunReport, SeedRun};

/// `ERFACT_DATA_DIR` if set, otherwise `data/mnist` in the workspace.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("ERFACT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")))
}

/// Training and test sets, truncated and standardized with training-set
/// channel statistics.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), CliError> {
    let (mut train, mut test) = match &cfg.data {
        DataSource::Mnist(dir) => {
            let dir = dir.clone().unwrap_or_else(default_data_dir);
            (load_idx_dir(&dir, "train")?, load_idx_dir(&dir, "test")?)
        }
        DataSource::Synthetic {
            kind,
            samples,
            noise,
        } => (
            synth_classification(*kind, *samples, *noise, 0)?,
            synth_classification(*kind, (*samples / 4).max(2), *noise, 1)?,
        ),
    };
    if let Some(n) = cfg.max_train {
        train = train.take(n);
    }
    if let Some(n) = cfg.max_test {
        test = test.take(n);
    }
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Usage(
            "training and test sets must be nonempty".into(),
        ));
    }
    let (mean, std) = train.channel_stats();
    train.standardize(&mean, &std);
    test.standardize(&mean, &std);
    Ok((train, test))
}

fn describe(run: &SeedRun) -> String {
    let last = run.last();
    let mut line = format!(
        "{} seed {}: test accuracy {:.2}%, test loss {:.4}, {:.1} s",
        run.activation, run.seed, last.test_accuracy, last.test_loss, run.seconds
    );
    let names = run.activation.param_names();
    for (layer, values) in &last.params {
        let pairs: Vec<String> = names
            .iter()
            .zip(values)
            .map(|(n, v)| format!("{n}={v:.4}"))
            .collect();
        line.push_str(&format!("; layer {layer} {}", pairs.join(" ")));
    }
    line
}

fn run_one(
    cfg: &ExperimentConfig,
    kind: ActivationKind,
    seed: u64,
    data: &(Dataset, Dataset),
) -> Result<SeedRun, CliError> {
    let (train_set, test_set) = data;
    let classes = train_set.class_count.max(test_set.class_count);
    let init = cfg.init_params(kind);
    let spec = cfg.network.spec(
        kind,
        (!init.is_empty()).then_some(init.as_slice()),
        train_set.sample_shape(),
        classes,
    );
    let outcome = train(&spec, train_set, test_set, &cfg.train_config(seed))?;
    Ok(SeedRun::from_outcome(kind, seed, &outcome))
}

/// Trains every (activation, seed) pair on already loaded data. Jobs are
/// spread over `cfg.threads` workers; results keep configuration order.
pub fn run_with_data(
    cfg: &ExperimentConfig,
    data: &(Dataset, Dataset),
    log: &(dyn Fn(&str) + Sync),
) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let jobs: Vec<(ActivationKind, u64)> = cfg
        .activations
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<SeedRun, CliError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..cfg.threads.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&(kind, seed)) = jobs.get(i) else {
                    break;
                };
                let result = run_one(cfg, kind, seed, data);
                if let Ok(run) = &result {
                    log(&describe(run));
                }
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    let runs = slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport { runs })
}

/// Loads the data (failing before any training), trains and writes the
/// report files into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig, log: &(dyn Fn(&str) + Sync)) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    log(&format!(
        "{} training / {} test samples, {} activation(s) x {} seed(s)",
        data.0.len(),
        data.1.len(),
        cfg.activations.len(),
        cfg.seeds.len()
    ));
    let report = run_with_data(cfg, &data, log)?;
    report.write(&cfg.out_dir)?;
    for a in report.aggregates() {
        log(&format!(
            "{}: {:.2} +- {:.2}% over {} run(s)",
            a.activation, a.accuracy_mean, a.accuracy_std, a.runs
        ));
    }
    Ok(report)
}
