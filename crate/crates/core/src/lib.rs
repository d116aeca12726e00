//! Trainable erf-based activations (ErfAct, Pserf) with a small CPU network
//! stack for comparing them against standard activations.
//!
//! Every activation exposes its value, its input derivative and its parameter
//! derivatives in closed form. Networks are built from a [`nn::NetworkSpec`]
//! and trained with the optimizers in [`optim`].

pub mod activation;
pub mod data;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod special;
pub mod tensor;
pub mod train;

pub use activation::{ActivationError, ActivationKind, ParamState};
pub use tensor::Tensor;
