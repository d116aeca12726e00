//! Reference implementations for testing, written independently of the
//! production kernels: erf from its power series and continued fraction,
//! activations from their textbook formulas through std math, and a
//! loop-nest network forward pass.

pub mod checks;

use std::f64::consts::PI;

use erfact_core::nn::{LayerSpec, Network, ParamRole};
use erfact_core::ActivationKind;

/// erf via the series `2/sqrt(pi) e^(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))`
/// for `|x| <= 3` (all terms positive, no cancellation) and the erfc continued
/// fraction, evaluated with the modified Lentz method, beyond.
pub fn erf_ref(x: f64) -> f64 {
    let a = x.abs();
    let v = if a <= 3.0 {
        let mut term = a;
        let mut sum = a;
        let mut n = 0.0;
        while term > sum * 1e-18 {
            n += 1.0;
            term *= 2.0 * a * a / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 / PI.sqrt() * (-a * a).exp() * sum
    } else {
        1.0 - erfc_cf(a)
    };
    v.copysign(x)
}

/// erfc(x) for x > 0 from `e^(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let ak = k as f64 / 2.0;
        d = x + ak * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + ak / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

pub fn softplus_ref(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid_ref(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activation value from the defining formula.
pub fn activation_ref(kind: ActivationKind, x: f64, p: &[f64]) -> f64 {
    match kind {
        ActivationKind::ErfAct => x * erf_ref(p[0] * (p[1] * x).exp()),
        ActivationKind::Pserf => x * erf_ref(p[0] * softplus_ref(p[1] * x)),
        ActivationKind::Serf => x * erf_ref(softplus_ref(x)),
        ActivationKind::ReLU => x.max(0.0),
        ActivationKind::LeakyReLU => x.max(0.01 * x),
        ActivationKind::PReLU => {
            if x > 0.0 {
                x
            } else {
                p[0] * x
            }
        }
        ActivationKind::ReLU6 => x.clamp(0.0, 6.0),
        ActivationKind::ELU => {
            if x > 0.0 {
                x
            } else {
                x.exp() - 1.0
            }
        }
        ActivationKind::Softplus => softplus_ref(x),
        ActivationKind::Swish => x * sigmoid_ref(p[0] * x),
        ActivationKind::GELU => {
            let c = (2.0 / PI).sqrt();
            0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
        }
        ActivationKind::Mish => x * softplus_ref(x).tanh(),
    }
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Fourth-order central difference with step `h`.
pub fn central_diff5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// `|a - n| <= atol + rtol |n|`.
pub fn close(analytic: f64, numeric: f64, atol: f64, rtol: f64) -> bool {
    (analytic - numeric).abs() <= atol + rtol * numeric.abs()
}

/// One sample through the network, evaluated with plain loops over the
/// network's current parameters and [`activation_ref`]. `input` is the
/// flattened per-sample tensor; dropout is the identity.
pub fn network_forward_ref(net: &Network, input: &[f64]) -> Vec<f64> {
    let params = net.params();
    let find = |layer: usize, role: ParamRole| -> &[f64] {
        params
            .iter()
            .find(|(l, r, _)| *l == layer && *r == role)
            .map(|(_, _, v)| *v)
            .unwrap_or(&[])
    };
    let mut x = input.to_vec();
    let shapes = net.shapes();
    for (i, layer) in net.spec().layers.iter().enumerate() {
        let shape = &shapes[i];
        x = match layer {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = (find(i, ParamRole::Weight), find(i, ParamRole::Bias));
                (0..*outputs)
                    .map(|o| b[o] + (0..*inputs).map(|j| w[o * inputs + j] * x[j]).sum::<f64>())
                    .collect()
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (w, b) = (find(i, ParamRole::Weight), find(i, ParamRole::Bias));
                let (h, wd) = (shape[1], shape[2]);
                let out = &shapes[i + 1];
                let (oh, ow) = (out[1], out[2]);
                let mut y = vec![0.0; out_channels * oh * ow];
                for oc in 0..*out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b[oc];
                            for ic in 0..*in_channels {
                                for ky in 0..*kernel {
                                    for kx in 0..*kernel {
                                        let iy = (oy * stride + ky) as isize - *padding as isize;
                                        let ix = (ox * stride + kx) as isize - *padding as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize
                                        {
                                            continue;
                                        }
                                        let wv = w
                                            [((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                        acc += wv * x[(ic * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                            y[(oc * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                y
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let out = &shapes[i + 1];
                let (oh, ow) = (out[1], out[2]);
                let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let v = x[(ch * h + oy * stride + ky) * wd + ox * stride + kx];
                                    let slot = &mut y[(ch * oh + oy) * ow + ox];
                                    *slot = slot.max(v);
                                }
                            }
                        }
                    }
                }
                y
            }
            LayerSpec::Flatten | LayerSpec::Dropout { .. } => x,
            LayerSpec::Activation { kind, .. } => {
                let p = find(i, ParamRole::Activation);
                x.iter().map(|&v| activation_ref(*kind, v, p)).collect()
            }
        };
    }
    x
}
