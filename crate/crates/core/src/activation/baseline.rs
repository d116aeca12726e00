//! Reference activations used for comparison.
//!
//! Piecewise kinds take the derivative at a kink from the branch on the
//! inside of the active region: `x = 0` uses the `x > 0` slope and ReLU6 at
//! `x = 6` uses the `x < 6` slope.

use crate::special::{sigmoid, softplus_stable, tanh};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;
pub const RELU6_CAP: f64 = 6.0;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn relu_dx(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    prelu(x, LEAKY_SLOPE)
}

#[inline]
pub fn leaky_relu_dx(x: f64) -> f64 {
    prelu_dx(x, LEAKY_SLOPE)
}

#[inline]
pub fn prelu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn prelu_dx(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn prelu_dslope(x: f64) -> f64 {
    if x >= 0.0 {
        0.0
    } else {
        x
    }
}

#[inline]
pub fn relu6(x: f64) -> f64 {
    x.clamp(0.0, RELU6_CAP)
}

#[inline]
pub fn relu6_dx(x: f64) -> f64 {
    if (0.0..=RELU6_CAP).contains(&x) {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        ELU_ALPHA * x.exp_m1()
    }
}

#[inline]
pub fn elu_dx(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        ELU_ALPHA * x.exp()
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    softplus_stable(x)
}

#[inline]
pub fn softplus_dx(x: f64) -> f64 {
    sigmoid(x)
}

/// `x * sigmoid(beta x)`.
#[inline]
pub fn swish(x: f64, beta: f64) -> f64 {
    x * sigmoid(beta * x)
}

#[inline]
pub fn swish_dx(x: f64, beta: f64) -> f64 {
    let s = sigmoid(beta * x);
    s + beta * x * s * (1.0 - s)
}

#[inline]
pub fn swish_dbeta(x: f64, beta: f64) -> f64 {
    let s = sigmoid(beta * x);
    x * x * s * (1.0 - s)
}

/// tanh form: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    let t = tanh(GELU_C * (x + GELU_K * x * x * x));
    0.5 * x * (1.0 + t)
}

#[inline]
pub fn gelu_dx(x: f64) -> f64 {
    let t = tanh(GELU_C * (x + GELU_K * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// `x * tanh(softplus(x))`.
#[inline]
pub fn mish(x: f64) -> f64 {
    x * tanh(softplus_stable(x))
}

#[inline]
pub fn mish_dx(x: f64) -> f64 {
    let t = tanh(softplus_stable(x));
    t + x * (1.0 - t * t) * sigmoid(x)
}
