//! `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, lists are comma-separated.
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use erfact_core::data::SynthKind;
use erfact_core::nn::{InitScheme, Preset};
use erfact_core::optim::{OptimizerState, Rule};
use erfact_core::train::{ScheduleKind, TrainConfig};
use erfact_core::ActivationKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// IDX files in a directory; `None` means the default location.
    Mnist(Option<PathBuf>),
    Synthetic {
        kind: SynthKind,
        samples: usize,
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: Preset,
    pub activations: Vec<ActivationKind>,
    pub data: DataSource,
    /// Use only the first `n` training / test samples.
    pub max_train: Option<usize>,
    pub max_test: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleKind,
    pub init: InitScheme,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub prelu_slope: f64,
    pub swish_beta: f64,
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Test fixture: name of a derivative routine to corrupt in gradcheck.
    pub inject_fault: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: Preset::Lenet,
            activations: vec![
                ActivationKind::ReLU,
                ActivationKind::ErfAct,
                ActivationKind::Pserf,
            ],
            data: DataSource::Mnist(None),
            max_train: None,
            max_test: None,
            epochs: 5,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: ScheduleKind::Constant,
            init: InitScheme::HeNormal,
            seeds: vec![1, 2, 3],
            alpha: 0.75,
            beta: 0.75,
            gamma: 1.25,
            delta: 0.85,
            prelu_slope: 0.25,
            swish_beta: 1.0,
            threads: 1,
            out_dir: PathBuf::from("runs"),
            inject_fault: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: cannot parse `{value}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

pub fn parse_activations(value: &str) -> Result<Vec<ActivationKind>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::Usage(format!("{e}"))))
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses and validates a configuration. Missing keys keep their
    /// defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        let mut data_kind = "mnist".to_string();
        let mut data_dir = None;
        let (mut samples, mut noise) = (2000, 0.05);
        let (mut schedule, mut step_factor, mut step_every) = ("constant".to_string(), 0.1, 30);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "line {}: expected key = value, got `{line}`",
                    n + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "network" => c.network = value.parse().map_err(CliError::Usage)?,
                "activations" => c.activations = parse_activations(value)?,
                "dataset" => data_kind = value.to_ascii_lowercase(),
                "data_dir" => data_dir = Some(PathBuf::from(value)),
                "synth_samples" => samples = parse(key, value)?,
                "synth_noise" => noise = parse(key, value)?,
                "max_train" => c.max_train = Some(parse(key, value)?),
                "max_test" => c.max_test = Some(parse(key, value)?),
                "epochs" => c.epochs = parse(key, value)?,
                "batch_size" => c.batch_size = parse(key, value)?,
                "optimizer" => {
                    c.optimizer = match value.to_ascii_lowercase().as_str() {
                        "adam" => OptimizerKind::Adam,
                        "sgd" => OptimizerKind::Sgd,
                        _ => return Err(CliError::Usage(format!("unknown optimizer `{value}`"))),
                    }
                }
                "lr" => c.lr = parse(key, value)?,
                "momentum" => c.momentum = parse(key, value)?,
                "weight_decay" => c.weight_decay = parse(key, value)?,
                "schedule" => schedule = value.to_ascii_lowercase(),
                "step_factor" => step_factor = parse(key, value)?,
                "step_every" => step_every = parse(key, value)?,
                "init" => {
                    c.init = match value.to_ascii_lowercase().as_str() {
                        "he" | "he_normal" => InitScheme::HeNormal,
                        "xavier" | "xavier_uniform" => InitScheme::XavierUniform,
                        _ => return Err(CliError::Usage(format!("unknown init `{value}`"))),
                    }
                }
                "seeds" => c.seeds = list(key, value)?,
                "alpha" => c.alpha = parse(key, value)?,
                "beta" => c.beta = parse(key, value)?,
                "gamma" => c.gamma = parse(key, value)?,
                "delta" => c.delta = parse(key, value)?,
                "prelu_slope" => c.prelu_slope = parse(key, value)?,
                "swish_beta" => c.swish_beta = parse(key, value)?,
                "threads" => c.threads = parse(key, value)?,
                "out_dir" => c.out_dir = PathBuf::from(value),
                "inject_fault" => {
                    c.inject_fault = Some(value.to_string()).filter(|v| !v.is_empty())
                }
                _ => {
                    return Err(CliError::Usage(format!(
                        "line {}: unknown key `{key}`",
                        n + 1
                    )))
                }
            }
        }
        c.data = match data_kind.as_str() {
            "mnist" => DataSource::Mnist(data_dir),
            "spirals" | "gaussians" => DataSource::Synthetic {
                kind: if data_kind == "spirals" {
                    SynthKind::Spirals
                } else {
                    SynthKind::TwoGaussians
                },
                samples,
                noise,
            },
            other => return Err(CliError::Usage(format!("unknown dataset `{other}`"))),
        };
        c.schedule = match schedule.as_str() {
            "constant" => ScheduleKind::Constant,
            "cosine" => ScheduleKind::Cosine,
            "step" => ScheduleKind::Step {
                factor: step_factor,
                every: step_every,
            },
            other => return Err(CliError::Usage(format!("unknown schedule `{other}`"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if self.activations.is_empty() {
            return fail("activations must not be empty");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if let ScheduleKind::Step { every: 0, .. } = self.schedule {
            return fail("step_every must be at least 1");
        }
        Ok(())
    }

    /// Initial parameters for `kind`; empty for fixed activations.
    pub fn init_params(&self, kind: ActivationKind) -> Vec<f64> {
        match kind {
            ActivationKind::ErfAct => vec![self.alpha, self.beta],
            ActivationKind::Pserf => vec![self.gamma, self.delta],
            ActivationKind::PReLU => vec![self.prelu_slope],
            ActivationKind::Swish => vec![self.swish_beta],
            _ => Vec::new(),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let rule = match self.optimizer {
            OptimizerKind::Adam => OptimizerState::adam_default().rule(),
            OptimizerKind::Sgd => Rule::Sgd {
                momentum: self.momentum,
                weight_decay: self.weight_decay,
            },
        };
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            rule,
            schedule: self.schedule,
            init: self.init,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_activation_parameters() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.init_params(ActivationKind::ErfAct), [0.75, 0.75]);
        assert_eq!(c.init_params(ActivationKind::Pserf), [1.25, 0.85]);
        assert_eq!(c.seeds, [1, 2, 3]);
    }

    #[test]
    fn parses_lists_comments_and_overrides() {
        let c = ExperimentConfig::parse(
            "# comparison\nactivations = ReLU, erfact ,Pserf\nseeds=4,5 # two\n\
             dataset = spirals\nsynth_samples = 300\nnetwork = mlp2\nschedule = step\nstep_every = 2\n",
        )
        .unwrap();
        assert_eq!(c.activations.len(), 3);
        assert_eq!(c.seeds, [4, 5]);
        assert_eq!(c.network, Preset::Mlp2);
        assert!(matches!(c.data, DataSource::Synthetic { samples: 300, .. }));
        assert_eq!(
            c.schedule,
            ScheduleKind::Step {
                factor: 0.1,
                every: 2
            }
        );
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        for text in [
            "epochs = 0",
            "seeds =",
            "activations = ",
            "activations = ReLU, Nope",
            "colour = blue",
            "epochs five",
            "lr = -1",
            "dataset = cifar",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }
}
