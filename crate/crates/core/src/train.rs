//! Mini-batch training and evaluation.

use std::time::Instant;

use thiserror::Error;

use crate::data::Dataset;
use crate::nn::{
    accuracy, softmax_cross_entropy, InitScheme, Mode, Network, NetworkError, NetworkSpec,
};
use crate::optim::{LrSchedule, OptimError, OptimizerState, Rule};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid training setup: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Constant,
    /// Annealed to zero over the full run, stepped once per epoch.
    Cosine,
    /// Multiply by `factor` every `every` epochs.
    Step {
        factor: f64,
        every: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rule: Rule,
    pub schedule: ScheduleKind,
    pub init: InitScheme,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam at `lr`, constant schedule, He-normal init.
    pub fn adam(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            rule: OptimizerState::adam_default().rule(),
            schedule: ScheduleKind::Constant,
            init: InitScheme::HeNormal,
            seed,
        }
    }

    fn lr_schedule(&self) -> LrSchedule {
        match self.schedule {
            ScheduleKind::Constant => LrSchedule::Constant(self.lr),
            ScheduleKind::Cosine => LrSchedule::CosineAnnealing {
                lr0: self.lr,
                total_steps: self.epochs,
            },
            ScheduleKind::Step { factor, every } => LrSchedule::StepDecay {
                lr0: self.lr,
                factor,
                every,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub test_loss: f64,
    /// Top-1 accuracy in percent.
    pub test_accuracy: f64,
    /// `(layer, values)` of every parametric activation at the end of the
    /// epoch.
    pub activation_params: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub network: Network,
    pub epochs: Vec<EpochStats>,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn last(&self) -> &EpochStats {
        self.epochs.last().expect("at least one epoch")
    }
}

/// splitmix64 finalizer, used to derive independent per-epoch and per-batch
/// seeds from the run seed.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean loss and top-1 accuracy (percent) over `ds`.
pub fn evaluate(net: &Network, ds: &Dataset, batch_size: usize) -> Result<(f64, f64), TrainError> {
    if ds.is_empty() {
        return Err(TrainError::Input("empty evaluation set".into()));
    }
    let (mut loss, mut correct) = (0.0, 0.0);
    for (x, y) in ds.batches(batch_size, None) {
        let (logits, _) = net.forward(&x, Mode::Eval)?;
        let (l, _) = softmax_cross_entropy(&logits, &y)?;
        loss += l * y.len() as f64;
        correct += accuracy(&logits, &y) * y.len() as f64;
    }
    let n = ds.len() as f64;
    Ok((loss / n, 100.0 * correct / n))
}

/// One optimizer step on a mini-batch. Returns the batch loss.
pub fn train_step(
    net: &mut Network,
    opt: &mut OptimizerState,
    x: &crate::tensor::Tensor,
    y: &[usize],
    lr: f64,
    dropout_seed: u64,
) -> Result<f64, TrainError> {
    net.zero_grad();
    let (logits, cache) = net.forward(x, Mode::Train { seed: dropout_seed })?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, y)?;
    let grads = net.backward(&cache, &dlogits)?;
    let mut groups = net.param_groups(&grads)?;
    opt.step(&mut groups, lr)?;
    Ok(loss)
}

/// Builds `spec`, initializes it from `cfg.seed` and trains on `train`,
/// evaluating on `test` after every epoch. The same seed gives the same
/// initial weights for any activation choice.
pub fn train(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<RunOutcome, TrainError> {
    if cfg.epochs == 0 {
        return Err(TrainError::Input("epochs must be at least 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Input("batch size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(TrainError::Input("empty training set".into()));
    }
    let started = Instant::now();
    let mut net = spec.build()?;
    net.init_weights(cfg.init, cfg.seed);
    let mut opt = OptimizerState::new(cfg.rule);
    let schedule = cfg.lr_schedule();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch)?;
        let epoch_seed = mix_seed(cfg.seed, epoch as u64 + 1);
        let mut loss_sum = 0.0;
        for (b, (x, y)) in train.batches(cfg.batch_size, Some(epoch_seed)).enumerate() {
            let loss = train_step(
                &mut net,
                &mut opt,
                &x,
                &y,
                lr,
                mix_seed(epoch_seed, b as u64),
            )?;
            loss_sum += loss * y.len() as f64;
        }
        let (test_loss, test_accuracy) = evaluate(&net, test, cfg.batch_size.max(256))?;
        epochs.push(EpochStats {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train.len() as f64,
            test_loss,
            test_accuracy,
            activation_params: net
                .activation_params()
                .into_iter()
                .filter(|(_, _, v)| !v.is_empty())
                .map(|(layer, _, v)| (layer, v))
                .collect(),
        });
    }
    Ok(RunOutcome {
        network: net,
        epochs,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::data::{synth_classification, SynthKind};
    use crate::nn::LayerSpec;

    #[test]
    fn zero_epochs_is_rejected() {
        let ds = synth_classification(SynthKind::TwoGaussians, 8, 0.0, 0).unwrap();
        let spec = NetworkSpec::new(
            vec![1, 1, 2],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 2,
                    outputs: 2,
                },
            ],
            2,
        );
        let cfg = TrainConfig::adam(0, 4, 1e-2, 0);
        assert!(matches!(
            train(&spec, &ds, &ds, &cfg),
            Err(TrainError::Input(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synth_classification(SynthKind::Spirals, 64, 0.05, 2).unwrap();
        let spec = NetworkSpec::new(
            vec![1, 1, 2],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 2,
                    outputs: 8,
                },
                LayerSpec::activation(ActivationKind::ErfAct),
                LayerSpec::Dropout { rate: 0.1 },
                LayerSpec::Dense {
                    inputs: 8,
                    outputs: 2,
                },
            ],
            2,
        );
        let cfg = TrainConfig::adam(3, 16, 1e-2, 9);
        let a = train(&spec, &ds, &ds, &cfg).unwrap();
        let b = train(&spec, &ds, &ds, &cfg).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.network.activation_params(), b.network.activation_params());
    }

    #[test]
    fn seeds_mix_apart() {
        assert_ne!(mix_seed(1, 1), mix_seed(1, 2));
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
    }
}
