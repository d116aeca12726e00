//! Named network layouts.

use std::fmt;
use std::str::FromStr;

use super::conv::window_extent;
use super::{LayerSpec, NetworkSpec};
use crate::activation::ActivationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// conv 6@5x5 (pad 2) - pool - conv 16@5x5 - pool - dense 120 - dense 84
    /// - dense classes, with an activation after every layer but the last.
    Lenet,
    /// flatten - dense 128 - dense 64 - dense classes.
    Mlp2,
    /// Seven 3x3 conv layers (128, 128, 64, 64, 64, 32, 32 channels) with
    /// three 2x2 max-pools, a 128-unit dense layer and dropout 0.2. No
    /// batch normalization.
    Cnn8,
    /// conv 2@3x3 - pool - conv 3@3x3 - dense classes; small enough to
    /// finite-difference every parameter.
    GradCheck,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Lenet => "lenet",
            Preset::Mlp2 => "mlp2",
            Preset::Cnn8 => "cnn8",
            Preset::GradCheck => "gradcheck",
        }
    }

    /// Builds the layout for a `[channels, height, width]` input. `init`
    /// overrides the activation's default parameters.
    pub fn spec(
        self,
        kind: ActivationKind,
        init: Option<&[f64]>,
        input: [usize; 3],
        classes: usize,
    ) -> NetworkSpec {
        let act = || LayerSpec::Activation {
            kind,
            init: init.map_or_else(|| kind.default_params().to_vec(), <[f64]>::to_vec),
        };
        let conv = |i, o, k, p| LayerSpec::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: 1,
            padding: p,
        };
        let pool = || LayerSpec::MaxPool2d {
            kernel: 2,
            stride: 2,
        };
        let dense = |i, o| LayerSpec::Dense {
            inputs: i,
            outputs: o,
        };
        let [c, h, w] = input;
        // Spatial extent after a conv (k, pad) followed by a 2x2 pool.
        let stage = |d: usize, k: usize, p: usize| {
            window_extent(d, k, 1, p)
                .and_then(|d| window_extent(d, 2, 2, 0))
                .unwrap_or(0)
        };
        let layers = match self {
            Preset::Lenet => {
                let (h2, w2) = (stage(stage(h, 5, 2), 5, 0), stage(stage(w, 5, 2), 5, 0));
                vec![
                    conv(c, 6, 5, 2),
                    act(),
                    pool(),
                    conv(6, 16, 5, 0),
                    act(),
                    pool(),
                    LayerSpec::Flatten,
                    dense(16 * h2 * w2, 120),
                    act(),
                    dense(120, 84),
                    act(),
                    dense(84, classes),
                ]
            }
            Preset::Mlp2 => vec![
                LayerSpec::Flatten,
                dense(c * h * w, 128),
                act(),
                dense(128, 64),
                act(),
                dense(64, classes),
            ],
            Preset::Cnn8 => {
                let s = |d| stage(stage(stage(d, 3, 1), 3, 1), 3, 1);
                vec![
                    conv(c, 128, 3, 1),
                    act(),
                    conv(128, 128, 3, 1),
                    act(),
                    pool(),
                    conv(128, 64, 3, 1),
                    act(),
                    conv(64, 64, 3, 1),
                    act(),
                    conv(64, 64, 3, 1),
                    act(),
                    pool(),
                    conv(64, 32, 3, 1),
                    act(),
                    conv(32, 32, 3, 1),
                    act(),
                    pool(),
                    LayerSpec::Flatten,
                    dense(32 * s(h) * s(w), 128),
                    act(),
                    LayerSpec::Dropout { rate: 0.2 },
                    dense(128, classes),
                ]
            }
            Preset::GradCheck => {
                let (h2, w2) = (stage(h, 3, 1), stage(w, 3, 1));
                vec![
                    conv(c, 2, 3, 1),
                    act(),
                    pool(),
                    conv(2, 3, 3, 1),
                    act(),
                    LayerSpec::Flatten,
                    dense(3 * h2 * w2, classes),
                ]
            }
        };
        NetworkSpec::new(input.to_vec(), layers, classes)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lenet" => Ok(Preset::Lenet),
            "mlp2" => Ok(Preset::Mlp2),
            "cnn8" => Ok(Preset::Cnn8),
            "gradcheck" => Ok(Preset::GradCheck),
            other => Err(format!("unknown network preset `{other}`")),
        }
    }
}
