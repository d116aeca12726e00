//! Activation functions: ErfAct, Pserf and ten reference baselines.
//!
//! Each kind exposes a forward value, the derivative with respect to its
//! input, and for trainable kinds the partials with respect to its
//! parameters. A single parameter set is shared by every unit of a layer, so
//! layer-level gradients are sums of per-element partials weighted by the
//! upstream gradient.

mod baseline;
mod proposed;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use baseline::*;
pub use proposed::*;

/// Maximum number of trainable scalars any kind carries.
pub const MAX_PARAMS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivationError {
    #[error("{kind} takes {expected} parameter(s), got {found}")]
    ArityMismatch {
        kind: ActivationKind,
        expected: usize,
        found: usize,
    },
    #[error("non-finite parameter value {value} for {kind}")]
    NonFinite { kind: ActivationKind, value: f64 },
    #[error("unknown activation `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    ErfAct,
    Pserf,
    ReLU,
    LeakyReLU,
    PReLU,
    ReLU6,
    ELU,
    Softplus,
    /// Trainable `beta`, initialised to 1.
    Swish,
    GELU,
    Mish,
    Serf,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 12] = [
        ActivationKind::ErfAct,
        ActivationKind::Pserf,
        ActivationKind::ReLU,
        ActivationKind::LeakyReLU,
        ActivationKind::PReLU,
        ActivationKind::ReLU6,
        ActivationKind::ELU,
        ActivationKind::Softplus,
        ActivationKind::Swish,
        ActivationKind::GELU,
        ActivationKind::Mish,
        ActivationKind::Serf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::ErfAct => "erfact",
            ActivationKind::Pserf => "pserf",
            ActivationKind::ReLU => "relu",
            ActivationKind::LeakyReLU => "leaky_relu",
            ActivationKind::PReLU => "prelu",
            ActivationKind::ReLU6 => "relu6",
            ActivationKind::ELU => "elu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Swish => "swish",
            ActivationKind::GELU => "gelu",
            ActivationKind::Mish => "mish",
            ActivationKind::Serf => "serf",
        }
    }

    pub fn param_arity(self) -> usize {
        match self {
            ActivationKind::ErfAct | ActivationKind::Pserf => 2,
            ActivationKind::PReLU | ActivationKind::Swish => 1,
            _ => 0,
        }
    }

    /// Names of the trainable parameters, in storage order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ActivationKind::ErfAct => &["alpha", "beta"],
            ActivationKind::Pserf => &["gamma", "delta"],
            ActivationKind::PReLU => &["slope"],
            ActivationKind::Swish => &["beta"],
            _ => &[],
        }
    }

    /// Initial parameter values: (0.75, 0.75) for ErfAct, (1.25, 0.85) for
    /// Pserf, 0.25 for the PReLU slope and 1 for the Swish `beta`.
    pub fn default_params(self) -> &'static [f64] {
        match self {
            ActivationKind::ErfAct => &[0.75, 0.75],
            ActivationKind::Pserf => &[1.25, 0.85],
            ActivationKind::PReLU => &[0.25],
            ActivationKind::Swish => &[1.0],
            _ => &[],
        }
    }

    pub fn is_baseline(self) -> bool {
        !matches!(self, ActivationKind::ErfAct | ActivationKind::Pserf)
    }

    /// True when the derivative is discontinuous somewhere.
    pub fn is_piecewise(self) -> bool {
        matches!(
            self,
            ActivationKind::ReLU
                | ActivationKind::LeakyReLU
                | ActivationKind::PReLU
                | ActivationKind::ReLU6
                | ActivationKind::ELU
        )
    }

    /// Points where the derivative jumps, for the given parameters.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            ActivationKind::ReLU
            | ActivationKind::LeakyReLU
            | ActivationKind::PReLU
            | ActivationKind::ELU => &[0.0],
            ActivationKind::ReLU6 => &[0.0, RELU6_CAP],
            _ => &[],
        }
    }

    /// Forward value. `params` must hold `param_arity()` values.
    #[inline]
    pub fn forward(self, x: f64, params: &[f64]) -> f64 {
        debug_assert_eq!(params.len(), self.param_arity());
        match self {
            ActivationKind::ErfAct => erfact_forward(x, params[0], params[1]),
            ActivationKind::Pserf => pserf_forward(x, params[0], params[1]),
            ActivationKind::ReLU => relu(x),
            ActivationKind::LeakyReLU => leaky_relu(x),
            ActivationKind::PReLU => prelu(x, params[0]),
            ActivationKind::ReLU6 => relu6(x),
            ActivationKind::ELU => elu(x),
            ActivationKind::Softplus => softplus(x),
            ActivationKind::Swish => swish(x, params[0]),
            ActivationKind::GELU => gelu(x),
            ActivationKind::Mish => mish(x),
            ActivationKind::Serf => serf_forward(x),
        }
    }

    #[inline]
    pub fn dx(self, x: f64, params: &[f64]) -> f64 {
        debug_assert_eq!(params.len(), self.param_arity());
        match self {
            ActivationKind::ErfAct => erfact_dx(x, params[0], params[1]),
            ActivationKind::Pserf => pserf_dx(x, params[0], params[1]),
            ActivationKind::ReLU => relu_dx(x),
            ActivationKind::LeakyReLU => leaky_relu_dx(x),
            ActivationKind::PReLU => prelu_dx(x, params[0]),
            ActivationKind::ReLU6 => relu6_dx(x),
            ActivationKind::ELU => elu_dx(x),
            ActivationKind::Softplus => softplus_dx(x),
            ActivationKind::Swish => swish_dx(x, params[0]),
            ActivationKind::GELU => gelu_dx(x),
            ActivationKind::Mish => mish_dx(x),
            ActivationKind::Serf => serf_dx(x),
        }
    }

    /// Per-element parameter partials; unused slots are zero.
    #[inline]
    pub fn dparams(self, x: f64, params: &[f64]) -> [f64; MAX_PARAMS] {
        debug_assert_eq!(params.len(), self.param_arity());
        match self {
            ActivationKind::ErfAct => {
                let (a, b) = erfact_dparams(x, params[0], params[1]);
                [a, b]
            }
            ActivationKind::Pserf => {
                let (g, d) = pserf_dparams(x, params[0], params[1]);
                [g, d]
            }
            ActivationKind::PReLU => [prelu_dslope(x), 0.0],
            ActivationKind::Swish => [swish_dbeta(x, params[0]), 0.0],
            _ => [0.0; MAX_PARAMS],
        }
    }

    /// Applies the activation elementwise.
    pub fn forward_slice(self, params: &[f64], input: &[f64], output: &mut [f64]) {
        assert_eq!(input.len(), output.len());
        match self {
            ActivationKind::ErfAct => {
                let (a, b) = (params[0], params[1]);
                for (y, &x) in output.iter_mut().zip(input) {
                    *y = erfact_forward(x, a, b);
                }
            }
            ActivationKind::Pserf => {
                let (g, d) = (params[0], params[1]);
                for (y, &x) in output.iter_mut().zip(input) {
                    *y = pserf_forward(x, g, d);
                }
            }
            ActivationKind::ReLU => {
                for (y, &x) in output.iter_mut().zip(input) {
                    *y = relu(x);
                }
            }
            _ => {
                for (y, &x) in output.iter_mut().zip(input) {
                    *y = self.forward(x, params);
                }
            }
        }
    }

    /// Forward pass that also records `f'(x)` into `dx` and the parameter
    /// partials into `dp[..arity]`, so that [`backward_recorded`] only has
    /// to multiply. Unused `dp` slices may be empty.
    pub fn forward_record(
        self,
        params: &[f64],
        input: &[f64],
        output: &mut [f64],
        dx: &mut [f64],
        dp: [&mut [f64]; MAX_PARAMS],
    ) {
        let n = input.len();
        assert!(output.len() == n && dx.len() == n);
        let [dp0, dp1] = dp;
        match self {
            ActivationKind::ErfAct => {
                let (a, b) = (params[0], params[1]);
                record_lanes(input, output, dx, dp0, dp1, |x| erfact_fused(x, a, b));
            }
            ActivationKind::Pserf => {
                let (g, d) = (params[0], params[1]);
                record_lanes(input, output, dx, dp0, dp1, |x| pserf_fused(x, g, d));
            }
            _ => {
                let arity = self.param_arity();
                for (i, &x) in input.iter().enumerate() {
                    output[i] = self.forward(x, params);
                    dx[i] = self.dx(x, params);
                    if arity > 0 {
                        let p = self.dparams(x, params);
                        dp0[i] = p[0];
                        if arity > 1 {
                            dp1[i] = p[1];
                        }
                    }
                }
            }
        }
    }

    /// Backpropagates `upstream` through the activation: writes
    /// `upstream * f'(x)` into `dinput` and returns the parameter gradients
    /// `sum_i upstream_i * df/drho(x_i)`, summed in index order.
    pub fn backward_slice(
        self,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        dinput: &mut [f64],
    ) -> [f64; MAX_PARAMS] {
        assert_eq!(input.len(), upstream.len());
        assert_eq!(input.len(), dinput.len());
        match self {
            ActivationKind::ErfAct => {
                let (a, b) = (params[0], params[1]);
                backward_lanes(input, upstream, dinput, |x| {
                    let (_, fx, fa, fb) = erfact_fused(x, a, b);
                    (fx, fa, fb)
                })
            }
            ActivationKind::Pserf => {
                let (g, d) = (params[0], params[1]);
                backward_lanes(input, upstream, dinput, |x| {
                    let (_, fx, fg, fd) = pserf_fused(x, g, d);
                    (fx, fg, fd)
                })
            }
            ActivationKind::ReLU => {
                for ((d, &x), &up) in dinput.iter_mut().zip(input).zip(upstream) {
                    *d = if x >= 0.0 { up } else { 0.0 };
                }
                [0.0; MAX_PARAMS]
            }
            _ if self.param_arity() == 0 => {
                for ((d, &x), &up) in dinput.iter_mut().zip(input).zip(upstream) {
                    *d = up * self.dx(x, params);
                }
                [0.0; MAX_PARAMS]
            }
            _ => backward_lanes(input, upstream, dinput, |x| {
                let p = self.dparams(x, params);
                (self.dx(x, params), p[0], p[1])
            }),
        }
    }
}

#[inline(always)]
fn record_lanes(
    input: &[f64],
    output: &mut [f64],
    dx: &mut [f64],
    dp0: &mut [f64],
    dp1: &mut [f64],
    f: impl Fn(f64) -> (f64, f64, f64, f64),
) {
    let n = input.len();
    assert!(dp0.len() == n && dp1.len() == n);
    let outs = output
        .iter_mut()
        .zip(dx.iter_mut())
        .zip(dp0.iter_mut().zip(dp1.iter_mut()));
    for (&x, ((y, d), (p0, p1))) in input.iter().zip(outs) {
        (*y, *d, *p0, *p1) = f(x);
    }
}

/// Backward pass from the derivatives recorded by
/// [`ActivationKind::forward_record`]. Sums use the same lane layout as
/// [`ActivationKind::backward_slice`].
pub fn backward_recorded(
    upstream: &[f64],
    dx: &[f64],
    dp: [&[f64]; MAX_PARAMS],
    dinput: &mut [f64],
) -> [f64; MAX_PARAMS] {
    for ((d, &up), &g) in dinput.iter_mut().zip(upstream).zip(dx) {
        *d = up * g;
    }
    dp.map(|p| {
        if p.is_empty() {
            0.0
        } else {
            lane_dot(upstream, p)
        }
    })
}

/// `sum_i u_i v_i` with element `i` added into partial sum `i % LANES`.
fn lane_dot(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len());
    let mut acc = [0.0; LANES];
    let split = u.len() - u.len() % LANES;
    for (cu, cv) in u[..split]
        .chunks_exact(LANES)
        .zip(v[..split].chunks_exact(LANES))
    {
        for l in 0..LANES {
            acc[l] += cu[l] * cv[l];
        }
    }
    for (l, i) in (split..u.len()).enumerate() {
        acc[l] += u[i] * v[i];
    }
    acc.iter().sum()
}

/// Lane count of the partial sums in [`backward_lanes`].
const LANES: usize = 8;
/// Elements per block; a multiple of [`LANES`].
const BLOCK: usize = 256;

/// Writes `upstream * dx` and sums `upstream * dparam` for both parameter
/// slots. Each block first fills the products in a plain elementwise loop
/// (which vectorizes), then folds them into `LANES` partial sums. The
/// partial sums are combined in a fixed order at the end, so the result does
/// not depend on the machine.
#[inline(always)]
fn backward_lanes(
    input: &[f64],
    upstream: &[f64],
    dinput: &mut [f64],
    f: impl Fn(f64) -> (f64, f64, f64),
) -> [f64; MAX_PARAMS] {
    let mut a0 = [0.0; LANES];
    let mut a1 = [0.0; LANES];
    let mut t0 = [0.0; BLOCK];
    let mut t1 = [0.0; BLOCK];
    let blocks = input
        .chunks(BLOCK)
        .zip(upstream.chunks(BLOCK))
        .zip(dinput.chunks_mut(BLOCK));
    for ((xs, us), ds) in blocks {
        let len = xs.len();
        for (((&x, &up), d), (p0, p1)) in xs
            .iter()
            .zip(us)
            .zip(ds.iter_mut())
            .zip(t0.iter_mut().zip(t1.iter_mut()))
        {
            let (dx, g0, g1) = f(x);
            *d = up * dx;
            *p0 = up * g0;
            *p1 = up * g1;
        }
        t0[len..].iter_mut().for_each(|v| *v = 0.0);
        t1[len..].iter_mut().for_each(|v| *v = 0.0);
        for (c0, c1) in t0.chunks_exact(LANES).zip(t1.chunks_exact(LANES)) {
            for l in 0..LANES {
                a0[l] += c0[l];
                a1[l] += c1[l];
            }
        }
    }
    [a0.iter().sum(), a1.iter().sum()]
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = ActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        ActivationKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().replace('_', "") == key)
            .ok_or_else(|| ActivationError::Unknown(s.trim().to_string()))
    }
}

/// Trainable parameters of one activation layer together with their
/// accumulated gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl ParamState {
    /// Default initial values for `kind`.
    pub fn for_kind(kind: ActivationKind) -> Self {
        let values = kind.default_params().to_vec();
        let grads = vec![0.0; values.len()];
        Self { values, grads }
    }

    pub fn with_values(kind: ActivationKind, values: &[f64]) -> Result<Self, ActivationError> {
        let state = Self {
            values: values.to_vec(),
            grads: vec![0.0; values.len()],
        };
        state.check(kind)?;
        Ok(state)
    }

    /// Verifies arity and finiteness against `kind`.
    pub fn check(&self, kind: ActivationKind) -> Result<(), ActivationError> {
        let expected = kind.param_arity();
        if self.values.len() != expected || self.grads.len() != expected {
            return Err(ActivationError::ArityMismatch {
                kind,
                expected,
                found: self.values.len(),
            });
        }
        if let Some(&value) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(ActivationError::NonFinite { kind, value });
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Checked forward evaluation for any kind.
pub fn baseline_forward(
    kind: ActivationKind,
    x: f64,
    params: &ParamState,
) -> Result<f64, ActivationError> {
    params.check(kind)?;
    Ok(kind.forward(x, &params.values))
}

/// Checked input derivative for any kind.
pub fn baseline_dx(
    kind: ActivationKind,
    x: f64,
    params: &ParamState,
) -> Result<f64, ActivationError> {
    params.check(kind)?;
    Ok(kind.dx(x, &params.values))
}
