//! Layer-stack networks with hand-written reverse-mode gradients.
//!
//! A [`NetworkSpec`] describes the stack declaratively; [`NetworkSpec::build`]
//! checks the shape algebra and allocates a [`Network`]. A forward pass
//! returns the logits and an [`ActivationCache`]; the matching backward pass
//! consumes that cache and returns a [`GradientSet`] covering every weight,
//! bias and activation parameter.
//!
//! Layout is NCHW, row-major. All reductions run in a fixed order so that a
//! run is bit-reproducible for a given seed.

pub mod conv;
mod loss;
mod presets;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::activation::{
    backward_recorded, ActivationError, ActivationKind, ParamState, MAX_PARAMS,
};
use crate::linalg::gemm;
use crate::optim::ParamGroup;
use crate::tensor::{Tensor, TensorError};
use conv::{ConvGeom, PoolGeom};

pub use loss::{accuracy, argmax_rows, softmax_cross_entropy};
pub use presets::Preset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("layer {layer} ({name}): {reason}")]
    Shape {
        layer: usize,
        name: &'static str,
        reason: String,
    },
    #[error("network ends in shape {shape:?} but {classes} classes were declared")]
    OutputExtent { shape: Vec<usize>, classes: usize },
    #[error("batch has per-sample shape {found:?}, network expects {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("activation cache does not belong to this network state")]
    StaleCache,
    #[error("upstream gradient has shape {found:?}, logits were {expected:?}")]
    GradShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("gradient set does not match the network parameters")]
    GradientLayout,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{labels} labels for a batch of {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error("layer {layer}: {source}")]
    Activation {
        layer: usize,
        #[source]
        source: ActivationError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    /// One parameter set shared by every unit of the layer.
    Activation {
        kind: ActivationKind,
        init: Vec<f64>,
    },
    /// Inverted dropout; identity in eval mode.
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn activation(kind: ActivationKind) -> Self {
        LayerSpec::Activation {
            kind,
            init: kind.default_params().to_vec(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Per-sample input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
    pub loss: Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; masks are drawn from `seed`.
    Train {
        seed: u64,
    },
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    HeNormal,
    XavierUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Activation,
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Conv2d {
        geom: ConvGeom,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    MaxPool2d {
        geom: PoolGeom,
    },
    Flatten,
    Activation {
        kind: ActivationKind,
        params: ParamState,
    },
    Dropout {
        rate: f64,
    },
}

/// Per-layer saved state from a forward pass.
#[derive(Debug, Clone)]
enum Saved {
    Nothing,
    Input(Tensor),
    Cols(Vec<f64>),
    Argmax(Vec<usize>),
    Mask(Vec<f64>),
    /// `f'(x)` and per-element parameter partials from a recording forward.
    Derivatives {
        dx: Vec<f64>,
        dp: [Vec<f64>; MAX_PARAMS],
    },
}

/// Everything a backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    network_id: u64,
    version: u64,
    batch: usize,
    logits_shape: Vec<usize>,
    saved: Vec<Saved>,
}

impl ActivationCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub layer: usize,
    pub role: ParamRole,
    pub values: Vec<f64>,
}

/// Gradients for every trainable scalar, in [`Network::param_slots`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub entries: Vec<ParamGrad>,
}

impl GradientSet {
    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Mutable view of one parameter tensor.
pub struct ParamSlot<'a> {
    pub layer: usize,
    pub role: ParamRole,
    pub values: &'a mut [f64],
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    /// Per-sample shape entering each layer; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    id: u64,
    version: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, classes: usize) -> Self {
        Self {
            input_shape,
            layers,
            classes,
            loss: Loss::SoftmaxCrossEntropy,
        }
    }

    /// Validates the shape algebra and allocates zeroed parameters.
    pub fn build(&self) -> Result<Network, NetworkError> {
        let mut shapes = vec![self.input_shape.clone()];
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let shape = shapes.last().unwrap();
            let fail = |reason: String| NetworkError::Shape {
                layer: i,
                name: spec.name(),
                reason,
            };
            let (layer, out) = match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    if shape.len() != 1 || shape[0] != inputs {
                        return Err(fail(format!("expects [{inputs}], got {shape:?}")));
                    }
                    if outputs == 0 {
                        return Err(fail("zero outputs".into()));
                    }
                    let layer = Layer::Dense {
                        inputs,
                        outputs,
                        weight: vec![0.0; inputs * outputs],
                        bias: vec![0.0; outputs],
                    };
                    (layer, vec![outputs])
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 || shape[0] != in_channels {
                        return Err(fail(format!(
                            "expects [{in_channels}, H, W], got {shape:?}"
                        )));
                    }
                    if out_channels == 0 {
                        return Err(fail("zero output channels".into()));
                    }
                    let oh = conv::window_extent(shape[1], kernel, stride, padding);
                    let ow = conv::window_extent(shape[2], kernel, stride, padding);
                    let (Some(out_h), Some(out_w)) = (oh, ow) else {
                        return Err(fail(format!(
                            "kernel {kernel} stride {stride} padding {padding} does not fit {shape:?}"
                        )));
                    };
                    let geom = ConvGeom {
                        in_ch: in_channels,
                        out_ch: out_channels,
                        kernel,
                        stride,
                        padding,
                        in_h: shape[1],
                        in_w: shape[2],
                        out_h,
                        out_w,
                    };
                    let layer = Layer::Conv2d {
                        geom,
                        weight: vec![0.0; out_channels * geom.patch_len()],
                        bias: vec![0.0; out_channels],
                    };
                    (layer, vec![out_channels, out_h, out_w])
                }
                LayerSpec::MaxPool2d { kernel, stride } => {
                    if shape.len() != 3 {
                        return Err(fail(format!("expects [C, H, W], got {shape:?}")));
                    }
                    let oh = conv::window_extent(shape[1], kernel, stride, 0);
                    let ow = conv::window_extent(shape[2], kernel, stride, 0);
                    let (Some(out_h), Some(out_w)) = (oh, ow) else {
                        return Err(fail(format!(
                            "window {kernel} stride {stride} does not fit {shape:?}"
                        )));
                    };
                    let geom = PoolGeom {
                        channels: shape[0],
                        kernel,
                        stride,
                        in_h: shape[1],
                        in_w: shape[2],
                        out_h,
                        out_w,
                    };
                    (Layer::MaxPool2d { geom }, vec![shape[0], out_h, out_w])
                }
                LayerSpec::Flatten => (Layer::Flatten, vec![shape.iter().product()]),
                LayerSpec::Activation { kind, ref init } => {
                    let params = ParamState::with_values(kind, init)
                        .map_err(|source| NetworkError::Activation { layer: i, source })?;
                    (Layer::Activation { kind, params }, shape.clone())
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(fail(format!("rate {rate} outside [0, 1)")));
                    }
                    (Layer::Dropout { rate }, shape.clone())
                }
            };
            layers.push(layer);
            shapes.push(out);
        }
        let last = shapes.last().unwrap();
        if last.len() != 1 || last[0] != self.classes {
            return Err(NetworkError::OutputExtent {
                shape: last.clone(),
                classes: self.classes,
            });
        }
        Ok(Network {
            spec: self.clone(),
            layers,
            shapes,
            id: fresh_id(),
            version: 0,
        })
    }
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    /// Per-sample shape entering each layer, followed by the output shape.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Fills weights from `scheme` with a generator seeded by `seed`; biases
    /// become zero. Layers are visited in order, so the draw depends only on
    /// the weight-bearing layers, never on the activation kinds.
    pub fn init_weights(&mut self, scheme: InitScheme, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let (weight, bias, fan_in, fan_out) = match layer {
                Layer::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => (weight, bias, *inputs, *outputs),
                Layer::Conv2d { geom, weight, bias } => {
                    let kk = geom.kernel * geom.kernel;
                    (weight, bias, geom.in_ch * kk, geom.out_ch * kk)
                }
                _ => continue,
            };
            match scheme {
                InitScheme::HeNormal => {
                    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                    weight.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
                }
                InitScheme::XavierUniform => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound).unwrap();
                    weight.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
                }
            }
            bias.iter_mut().for_each(|b| *b = 0.0);
        }
        self.version += 1;
    }

    /// `(layer, role, length)` for every parameter tensor, in gradient order.
    pub fn param_slots(&self) -> Vec<(usize, ParamRole, usize)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                    out.push((i, ParamRole::Weight, weight.len()));
                    out.push((i, ParamRole::Bias, bias.len()));
                }
                Layer::Activation { params, .. } if !params.values.is_empty() => {
                    out.push((i, ParamRole::Activation, params.values.len()));
                }
                _ => {}
            }
        }
        out
    }

    /// Read-only view of every parameter tensor, in gradient order.
    pub fn params(&self) -> Vec<(usize, ParamRole, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                    out.push((i, ParamRole::Weight, weight.as_slice()));
                    out.push((i, ParamRole::Bias, bias.as_slice()));
                }
                Layer::Activation { params, .. } if !params.values.is_empty() => {
                    out.push((i, ParamRole::Activation, params.values.as_slice()));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slots().iter().map(|s| s.2).sum()
    }

    /// Mutable access to every parameter tensor. Invalidates outstanding
    /// caches.
    pub fn params_mut(&mut self) -> Vec<ParamSlot<'_>> {
        self.version += 1;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                    out.push(ParamSlot {
                        layer: i,
                        role: ParamRole::Weight,
                        values: weight,
                    });
                    out.push(ParamSlot {
                        layer: i,
                        role: ParamRole::Bias,
                        values: bias,
                    });
                }
                Layer::Activation { params, .. } if !params.values.is_empty() => {
                    out.push(ParamSlot {
                        layer: i,
                        role: ParamRole::Activation,
                        values: &mut params.values,
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Pairs parameters with `grads` for an optimizer step. Weight decay is
    /// enabled for weights only.
    pub fn param_groups<'a>(
        &'a mut self,
        grads: &'a GradientSet,
    ) -> Result<Vec<ParamGroup<'a>>, NetworkError> {
        let slots = self.params_mut();
        if slots.len() != grads.entries.len() {
            return Err(NetworkError::GradientLayout);
        }
        slots
            .into_iter()
            .zip(&grads.entries)
            .map(|(slot, g)| {
                if slot.layer != g.layer
                    || slot.role != g.role
                    || slot.values.len() != g.values.len()
                {
                    return Err(NetworkError::GradientLayout);
                }
                Ok(ParamGroup {
                    decay: slot.role == ParamRole::Weight,
                    values: slot.values,
                    grads: &g.values,
                })
            })
            .collect()
    }

    /// `(layer, kind, values)` for every activation layer.
    pub fn activation_params(&self) -> Vec<(usize, ActivationKind, Vec<f64>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Activation { kind, params } => Some((i, *kind, params.values.clone())),
                _ => None,
            })
            .collect()
    }

    /// The shared parameter state of activation layer `layer`.
    pub fn activation_state(&self, layer: usize) -> Option<&ParamState> {
        match self.layers.get(layer) {
            Some(Layer::Activation { params, .. }) => Some(params),
            _ => None,
        }
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            if let Layer::Activation { params, .. } = layer {
                params.zero_grad();
            }
        }
    }

    /// Runs the stack on `batch` (`[N, ...input_shape]`).
    pub fn forward(
        &self,
        batch: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, ActivationCache), NetworkError> {
        let shape = batch.shape();
        if shape.is_empty() || shape[1..] != self.shapes[0][..] {
            return Err(NetworkError::InputShape {
                expected: self.shapes[0].clone(),
                found: shape.get(1..).unwrap_or(&[]).to_vec(),
            });
        }
        let n = shape[0];
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&self.shapes[i + 1]);
            let (y, keep) = match layer {
                Layer::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => {
                    let mut y = Vec::with_capacity(n * outputs);
                    for _ in 0..n {
                        y.extend_from_slice(bias);
                    }
                    gemm(
                        n,
                        *inputs,
                        *outputs,
                        x.data(),
                        false,
                        weight,
                        true,
                        &mut y,
                        true,
                    );
                    (y, Saved::Input(x))
                }
                Layer::Conv2d { geom, weight, bias } => {
                    let (y, cols) = conv::conv_forward(geom, n, x.data(), weight, bias);
                    (y, Saved::Cols(cols))
                }
                Layer::MaxPool2d { geom } => {
                    let (y, idx) = conv::maxpool_forward(geom, n, x.data());
                    (y, Saved::Argmax(idx))
                }
                Layer::Flatten => (x.into_data(), Saved::Nothing),
                Layer::Activation { kind, params } => {
                    let mut y = vec![0.0; x.len()];
                    match mode {
                        Mode::Train { .. } if !kind.is_piecewise() => {
                            let arity = kind.param_arity();
                            let mut dx = vec![0.0; x.len()];
                            let mut dp: [Vec<f64>; MAX_PARAMS] = std::array::from_fn(|k| {
                                if k < arity {
                                    vec![0.0; x.len()]
                                } else {
                                    Vec::new()
                                }
                            });
                            let [d0, d1] = &mut dp;
                            kind.forward_record(
                                &params.values,
                                x.data(),
                                &mut y,
                                &mut dx,
                                [d0, d1],
                            );
                            (y, Saved::Derivatives { dx, dp })
                        }
                        _ => {
                            kind.forward_slice(&params.values, x.data(), &mut y);
                            (y, Saved::Input(x))
                        }
                    }
                }
                Layer::Dropout { rate } => match mode {
                    Mode::Eval => (x.into_data(), Saved::Nothing),
                    Mode::Train { seed } => {
                        let keep = 1.0 - rate;
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                        );
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let y = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                        (y, Saved::Mask(mask))
                    }
                },
            };
            saved.push(keep);
            x = Tensor::new(out_shape, y)?;
        }
        let cache = ActivationCache {
            network_id: self.id,
            version: self.version,
            batch: n,
            logits_shape: x.shape().to_vec(),
            saved,
        };
        Ok((x, cache))
    }

    /// Reverse pass from `dlogits` (`dL/dlogits`). Activation-parameter
    /// gradients are also added into each layer's [`ParamState::grads`].
    pub fn backward(
        &mut self,
        cache: &ActivationCache,
        dlogits: &Tensor,
    ) -> Result<GradientSet, NetworkError> {
        if cache.network_id != self.id
            || cache.version != self.version
            || cache.saved.len() != self.layers.len()
        {
            return Err(NetworkError::StaleCache);
        }
        if dlogits.shape() != cache.logits_shape.as_slice() {
            return Err(NetworkError::GradShape {
                expected: cache.logits_shape.clone(),
                found: dlogits.shape().to_vec(),
            });
        }
        let n = cache.batch;
        let mut grad = dlogits.data().to_vec();
        let mut per_layer: Vec<Vec<ParamGrad>> = vec![Vec::new(); self.layers.len()];
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let need_input_grad = i > 0;
            let in_len: usize = n * self.shapes[i].iter().product::<usize>();
            match (layer, &cache.saved[i]) {
                (
                    Layer::Dense {
                        inputs,
                        outputs,
                        weight,
                        ..
                    },
                    Saved::Input(x),
                ) => {
                    let (fi, fo) = (*inputs, *outputs);
                    let mut dw = vec![0.0; fi * fo];
                    gemm(fo, n, fi, &grad, true, x.data(), false, &mut dw, false);
                    let mut db = vec![0.0; fo];
                    for row in grad.chunks(fo) {
                        for (b, g) in db.iter_mut().zip(row) {
                            *b += g;
                        }
                    }
                    let dx = if need_input_grad {
                        let mut dx = vec![0.0; n * fi];
                        gemm(n, fo, fi, &grad, false, weight, false, &mut dx, false);
                        dx
                    } else {
                        Vec::new()
                    };
                    per_layer[i] = vec![
                        ParamGrad {
                            layer: i,
                            role: ParamRole::Weight,
                            values: dw,
                        },
                        ParamGrad {
                            layer: i,
                            role: ParamRole::Bias,
                            values: db,
                        },
                    ];
                    grad = dx;
                }
                (Layer::Conv2d { geom, weight, .. }, Saved::Cols(cols)) => {
                    let mut dw = vec![0.0; weight.len()];
                    let mut db = vec![0.0; geom.out_ch];
                    let mut dx = if need_input_grad {
                        vec![0.0; in_len]
                    } else {
                        Vec::new()
                    };
                    conv::conv_backward(
                        geom,
                        n,
                        cols,
                        weight,
                        &grad,
                        &mut dw,
                        &mut db,
                        need_input_grad.then_some(dx.as_mut_slice()),
                    );
                    per_layer[i] = vec![
                        ParamGrad {
                            layer: i,
                            role: ParamRole::Weight,
                            values: dw,
                        },
                        ParamGrad {
                            layer: i,
                            role: ParamRole::Bias,
                            values: db,
                        },
                    ];
                    grad = dx;
                }
                (Layer::MaxPool2d { .. }, Saved::Argmax(idx)) => {
                    let mut dx = vec![0.0; in_len];
                    conv::maxpool_backward(idx, &grad, &mut dx);
                    grad = dx;
                }
                (Layer::Flatten, Saved::Nothing) => {}
                (
                    Layer::Activation { kind, params },
                    saved @ (Saved::Input(_) | Saved::Derivatives { .. }),
                ) => {
                    let mut dx = vec![0.0; in_len];
                    let acc = match saved {
                        Saved::Input(x) => {
                            kind.backward_slice(&params.values, x.data(), &grad, &mut dx)
                        }
                        Saved::Derivatives { dx: fx, dp } => {
                            backward_recorded(&grad, fx, [&dp[0], &dp[1]], &mut dx)
                        }
                        _ => unreachable!(),
                    };
                    let arity = params.values.len();
                    if arity > 0 {
                        for (g, a) in params.grads.iter_mut().zip(&acc) {
                            *g += a;
                        }
                        per_layer[i] = vec![ParamGrad {
                            layer: i,
                            role: ParamRole::Activation,
                            values: acc[..arity].to_vec(),
                        }];
                    }
                    grad = dx;
                }
                (Layer::Dropout { .. }, Saved::Nothing) => {}
                (Layer::Dropout { .. }, Saved::Mask(mask)) => {
                    grad.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                }
                _ => return Err(NetworkError::StaleCache),
            }
        }
        Ok(GradientSet {
            entries: per_layer.into_iter().flatten().collect(),
        })
    }

    /// Mean softmax cross-entropy of `batch` against `labels` in eval mode.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64, NetworkError> {
        let (logits, _) = self.forward(batch, Mode::Eval)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(inputs: usize, outputs: usize) -> LayerSpec {
        LayerSpec::Dense { inputs, outputs }
    }

    #[test]
    fn scalar_affine() {
        let spec = NetworkSpec::new(vec![1], vec![dense(1, 1)], 1);
        let mut net = spec.build().unwrap();
        net.params_mut()[0].values[0] = 2.0;
        let (y, _) = net
            .forward(&Tensor::new(vec![1, 1], vec![3.0]).unwrap(), Mode::Eval)
            .unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn identity_convolution() {
        let spec = NetworkSpec::new(
            vec![1, 5, 4],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Flatten,
            ],
            20,
        );
        let mut net = spec.build().unwrap();
        {
            let mut slots = net.params_mut();
            slots[0].values.iter_mut().for_each(|w| *w = 0.0);
            slots[0].values[4] = 1.0;
        }
        let img = Tensor::from_fn(&[2, 1, 5, 4], |i| (i as f64 * 1.3).sin());
        let (y, _) = net.forward(&img, Mode::Eval).unwrap();
        assert_eq!(y.data(), img.data());
    }

    #[test]
    fn shape_algebra_rejects_bad_stacks() {
        let bad = NetworkSpec::new(vec![3], vec![dense(4, 2)], 2);
        assert!(matches!(
            bad.build(),
            Err(NetworkError::Shape { layer: 0, .. })
        ));
        let bad = NetworkSpec::new(
            vec![1, 4, 4],
            vec![LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 7,
                stride: 1,
                padding: 0,
            }],
            2,
        );
        assert!(matches!(
            bad.build(),
            Err(NetworkError::Shape { name: "conv2d", .. })
        ));
        let bad = NetworkSpec::new(vec![3], vec![dense(3, 4)], 2);
        assert!(matches!(
            bad.build(),
            Err(NetworkError::OutputExtent { .. })
        ));
        let bad = NetworkSpec::new(
            vec![3],
            vec![
                LayerSpec::Activation {
                    kind: ActivationKind::ErfAct,
                    init: vec![1.0],
                },
                dense(3, 2),
            ],
            2,
        );
        assert!(matches!(
            bad.build(),
            Err(NetworkError::Activation { layer: 0, .. })
        ));
        let bad = NetworkSpec::new(
            vec![3],
            vec![LayerSpec::Dropout { rate: 1.0 }, dense(3, 2)],
            2,
        );
        assert!(bad.build().is_err());
    }

    #[test]
    fn input_shape_mismatch_names_expected_shape() {
        let net = NetworkSpec::new(vec![3], vec![dense(3, 2)], 2)
            .build()
            .unwrap();
        let err = net
            .forward(&Tensor::zeros(&[4, 2]), Mode::Eval)
            .unwrap_err();
        assert_eq!(
            err,
            NetworkError::InputShape {
                expected: vec![3],
                found: vec![2]
            }
        );
    }

    #[test]
    fn stale_cache_is_rejected() {
        let spec = NetworkSpec::new(vec![3], vec![dense(3, 2)], 2);
        let mut net = spec.build().unwrap();
        net.init_weights(InitScheme::HeNormal, 1);
        let x = Tensor::filled(&[2, 3], 0.5);
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let dy = Tensor::filled(y.shape(), 1.0);
        assert!(net.backward(&cache, &dy).is_ok());
        net.params_mut()[0].values[0] += 1.0;
        assert_eq!(net.backward(&cache, &dy), Err(NetworkError::StaleCache));
        let mut other = net.clone();
        let (_, fresh) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(other.backward(&fresh, &dy), Err(NetworkError::StaleCache));
        assert!(matches!(
            net.backward(&fresh, &Tensor::zeros(&[3, 2])),
            Err(NetworkError::GradShape { .. })
        ));
    }

    #[test]
    fn dropout_eval_is_identity_and_train_is_seeded() {
        let spec = NetworkSpec::new(vec![50], vec![LayerSpec::Dropout { rate: 0.5 }], 50);
        let net = spec.build().unwrap();
        let x = Tensor::from_fn(&[4, 50], |i| i as f64 + 1.0);
        let (y, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y, x);
        let (a, _) = net.forward(&x, Mode::Train { seed: 9 }).unwrap();
        let (b, _) = net.forward(&x, Mode::Train { seed: 9 }).unwrap();
        assert_eq!(a, b);
        let dropped = a.data().iter().filter(|v| **v == 0.0).count();
        assert!(dropped > 50 && dropped < 150, "{dropped}");
        for (o, i) in a.data().iter().zip(x.data()) {
            assert!(*o == 0.0 || *o == 2.0 * i);
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = Preset::Lenet.spec(ActivationKind::ReLU, None, [1, 28, 28], 10);
        let mut a = spec.build().unwrap();
        let mut b = spec.build().unwrap();
        a.init_weights(InitScheme::HeNormal, 42);
        b.init_weights(InitScheme::HeNormal, 42);
        let (pa, pb) = (a.params_mut(), b.params_mut());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.values, y.values);
            if x.role == ParamRole::Bias {
                assert!(x.values.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn he_normal_spread() {
        let spec = NetworkSpec::new(vec![100], vec![dense(100, 50)], 50);
        let mut net = spec.build().unwrap();
        net.init_weights(InitScheme::HeNormal, 7);
        let slots = net.params_mut();
        let w = &slots[0].values;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64).sqrt();
        let target = (2.0f64 / 100.0).sqrt();
        assert!((std - target).abs() / target < 0.1, "{std} vs {target}");
    }

    #[test]
    fn xavier_uniform_bound() {
        let spec = NetworkSpec::new(vec![30], vec![dense(30, 20)], 20);
        let mut net = spec.build().unwrap();
        net.init_weights(InitScheme::XavierUniform, 3);
        let bound = (6.0f64 / 50.0).sqrt();
        let slots = net.params_mut();
        assert!(slots[0].values.iter().all(|w| w.abs() <= bound));
        let max = slots[0].values.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(max > 0.9 * bound);
    }

    #[test]
    fn same_seed_gives_same_weights_across_activations() {
        let mut nets: Vec<Network> = [
            ActivationKind::ReLU,
            ActivationKind::ErfAct,
            ActivationKind::Pserf,
        ]
        .into_iter()
        .map(|k| {
            let mut n = Preset::Lenet
                .spec(k, None, [1, 28, 28], 10)
                .build()
                .unwrap();
            n.init_weights(InitScheme::HeNormal, 5);
            n
        })
        .collect();
        let weights: Vec<Vec<Vec<f64>>> = nets
            .iter_mut()
            .map(|n| {
                n.params_mut()
                    .into_iter()
                    .filter(|s| s.role != ParamRole::Activation)
                    .map(|s| s.values.to_vec())
                    .collect()
            })
            .collect();
        assert_eq!(weights[0], weights[1]);
        assert_eq!(weights[0], weights[2]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = Preset::GradCheck.spec(ActivationKind::ErfAct, None, [1, 8, 8], 3);
        let mut net = spec.build().unwrap();
        net.init_weights(InitScheme::HeNormal, 1);
        let x = Tensor::from_fn(&[2, 1, 8, 8], |i| (i as f64 * 0.31).sin());
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let grads = net.backward(&cache, &Tensor::zeros(y.shape())).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(grads.entries.len(), net.param_slots().len());
    }

    #[test]
    fn activation_layer_gradient_is_sum_of_partials() {
        // Loss = sum of outputs, so dL/df = 1 everywhere.
        let spec = NetworkSpec::new(
            vec![6],
            vec![LayerSpec::activation(ActivationKind::ErfAct)],
            6,
        );
        let mut net = spec.build().unwrap();
        let x = Tensor::from_fn(&[3, 6], |i| i as f64 * 0.4 - 3.0);
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let grads = net
            .backward(&cache, &Tensor::filled(y.shape(), 1.0))
            .unwrap();
        let (mut da, mut db) = (0.0, 0.0);
        for &v in x.data() {
            let (a, b) = crate::activation::erfact_dparams(v, 0.75, 0.75);
            da += a;
            db += b;
        }
        assert_eq!(grads.entries.len(), 1);
        assert!((grads.entries[0].values[0] - da).abs() < 1e-12);
        assert!((grads.entries[0].values[1] - db).abs() < 1e-12);
        let st = net.activation_state(0).unwrap();
        assert_eq!(st.grads, grads.entries[0].values);
        net.zero_grad();
        assert_eq!(net.activation_state(0).unwrap().grads, vec![0.0, 0.0]);
    }
}
