//! Forward/backward timing per activation.
//!
//! Two targets are timed: a whole network pass (the LeNet preset on the
//! requested input shape, activations swapped) and the bare activation
//! kernel over a tensor of that shape. Each measurement runs `warmup`
//! untimed iterations, then `repeats` timed ones. The reported mean is the
//! median of five group means; the std is over all timed iterations.

use std::hint::black_box;
use std::time::Instant;

use erfact_core::nn::{softmax_cross_entropy, InitScheme, Mode, Preset};
use erfact_core::train::mix_seed;
use erfact_core::{ActivationKind, Tensor};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Network,
    Activation,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Network => "network",
            Target::Activation => "activation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kinds: Vec<ActivationKind>,
    /// `[N, C, H, W]`.
    pub shape: [usize; 4],
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub targets: Vec<Target>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            kinds: vec![
                ActivationKind::ReLU,
                ActivationKind::ErfAct,
                ActivationKind::Pserf,
            ],
            shape: [32, 3, 32, 32],
            repeats: 50,
            warmup: 50,
            seed: 0,
            targets: vec![Target::Network, Target::Activation],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub mean_us: f64,
    pub std_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub target: Target,
    pub kind: ActivationKind,
    pub forward: Timing,
    pub backward: Timing,
}

impl BenchRow {
    pub fn total_us(&self) -> f64 {
        self.forward.mean_us + self.backward.mean_us
    }
}

/// Median of the means of five consecutive groups, and the sample std.
pub fn summarize(samples_us: &[f64]) -> Timing {
    let groups = 5.min(samples_us.len()).max(1);
    let size = samples_us.len() / groups;
    let mut means: Vec<f64> = (0..groups)
        .map(|g| {
            let chunk = &samples_us[g * size..(g + 1) * size];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let median = if groups % 2 == 1 {
        means[groups / 2]
    } else {
        (means[groups / 2 - 1] + means[groups / 2]) / 2.0
    };
    let (_, std) = crate::report::mean_std(samples_us);
    Timing {
        mean_us: median,
        std_us: if std.is_nan() { 0.0 } else { std },
    }
}

fn time(warmup: usize, repeats: usize, mut f: impl FnMut()) -> Timing {
    for _ in 0..warmup {
        f();
    }
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    summarize(&samples)
}

/// Uniform values in [-1, 1) from `seed`.
pub fn bench_input(shape: &[usize], seed: u64) -> Tensor {
    Tensor::from_fn(shape, |i| {
        (mix_seed(seed, i as u64) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

fn bench_network(cfg: &BenchConfig, kind: ActivationKind) -> Result<BenchRow, CliError> {
    let [n, c, h, w] = cfg.shape;
    let classes = 10;
    let usage = |e: erfact_core::nn::NetworkError| CliError::Usage(e.to_string());
    let mut net = Preset::Lenet
        .spec(kind, None, [c, h, w], classes)
        .build()
        .map_err(usage)?;
    net.init_weights(InitScheme::HeNormal, cfg.seed);
    let x = bench_input(&cfg.shape, cfg.seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mode = Mode::Train { seed: cfg.seed };
    let forward = time(cfg.warmup, cfg.repeats, || {
        black_box(net.forward(black_box(&x), mode).expect("forward"));
    });
    let (logits, cache) = net.forward(&x, mode).map_err(usage)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &labels).map_err(usage)?;
    let backward = time(cfg.warmup, cfg.repeats, || {
        net.zero_grad();
        black_box(net.backward(&cache, black_box(&dlogits)).expect("backward"));
    });
    Ok(BenchRow {
        target: Target::Network,
        kind,
        forward,
        backward,
    })
}

fn bench_activation(cfg: &BenchConfig, kind: ActivationKind) -> BenchRow {
    let x = bench_input(&cfg.shape, cfg.seed).into_data();
    let up = bench_input(&cfg.shape, cfg.seed ^ 1).into_data();
    let p = kind.default_params();
    let mut y = vec![0.0; x.len()];
    let mut dx = vec![0.0; x.len()];
    let forward = time(cfg.warmup, cfg.repeats, || {
        kind.forward_slice(p, black_box(&x), &mut y);
        black_box(&y);
    });
    let backward = time(cfg.warmup, cfg.repeats, || {
        black_box(kind.backward_slice(p, black_box(&x), &up, &mut dx));
    });
    BenchRow {
        target: Target::Activation,
        kind,
        forward,
        backward,
    }
}

pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRow>, CliError> {
    if cfg.repeats < 10 {
        return Err(CliError::Usage(format!(
            "repeats must be at least 10, got {}",
            cfg.repeats
        )));
    }
    if cfg.kinds.is_empty() || cfg.shape.contains(&0) {
        return Err(CliError::Usage(
            "need activations and a nonempty shape".into(),
        ));
    }
    let mut rows = Vec::new();
    for &target in &cfg.targets {
        for &kind in &cfg.kinds {
            rows.push(match target {
                Target::Network => bench_network(cfg, kind)?,
                Target::Activation => bench_activation(cfg, kind),
            });
        }
    }
    Ok(rows)
}

/// Forward+backward cost of `kind` relative to ReLU on the same target.
pub fn ratio_to_relu(rows: &[BenchRow], target: Target, kind: ActivationKind) -> Option<f64> {
    let find = |k| rows.iter().find(|r| r.target == target && r.kind == k);
    Some(find(kind)?.total_us() / find(ActivationKind::ReLU)?.total_us())
}

pub fn rows_csv(rows: &[BenchRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "target",
        "kind",
        "forward_mean_us",
        "forward_std_us",
        "backward_mean_us",
        "backward_std_us",
        "ratio_to_relu",
    ])?;
    for r in rows {
        let ratio =
            ratio_to_relu(rows, r.target, r.kind).map_or(String::new(), |v| format!("{v:.3}"));
        w.write_record([
            r.target.name().to_string(),
            r.kind.name().to_string(),
            format!("{:.3}", r.forward.mean_us),
            format!("{:.3}", r.forward.std_us),
            format!("{:.3}", r.backward.mean_us),
            format!("{:.3}", r.backward.std_us),
            ratio,
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
