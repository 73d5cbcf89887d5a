//! Minimal tensor core with hand-written backward passes.
//!
//! Layers cache what their backward pass needs during `forward`; `backward`
//! consumes that cache, accumulates parameter gradients in place, and returns
//! the gradient with respect to the layer input.

mod activation;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod gradcheck;
mod linear;
mod loss;
mod optim;
mod pool;
mod tensor;

pub use activation::{
    add, broadcast_mul_channel, broadcast_mul_channel_backward, relu, sigmoid, Relu, Sigmoid,
};
pub use batchnorm::BatchNorm2d;
pub use conv::{Conv2d, Padding};
pub use gradcheck::{gradient_check, numeric_gradient, relative_error};
pub use linear::Linear;
pub use loss::{argmax_accuracy, softmax, softmax_cross_entropy};
pub use optim::{Sgd, SgdConfig};
pub use pool::{global_avg_pool, global_avg_pool_backward, GlobalAvgPool};
pub use tensor::{Real, Tensor};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Persistent state such as batch-norm running statistics.
    Buffer,
}

/// Anything that owns named tensors.
pub trait Module<T: Real> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, t, kind| {
            if kind == ParamKind::Trainable {
                t.zero_grad();
            }
        });
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t, kind| {
            if kind == ParamKind::Trainable {
                n += t.len();
            }
        });
        n
    }

    fn param_names(&mut self) -> Vec<(String, [usize; 4], ParamKind)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t, kind| {
            out.push((name.to_string(), t.shape(), kind))
        });
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// He-uniform initialisation: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
/// Draws in f64 so f32 and f64 models built from one seed agree.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..n)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect()
}

pub(crate) fn take_cache<C>(cache: &mut Option<C>, layer: &str) -> Result<C> {
    cache
        .take()
        .ok_or_else(|| Error::Config(format!("{layer}: backward called without forward")))
}

/// Copies every tensor of `src` into the same-named tensor of `dst`.
/// Returns the number of tensors copied; shape mismatches are errors.
pub fn copy_params<T: Real>(src: &mut dyn Module<T>, dst: &mut dyn Module<T>) -> Result<usize> {
    let mut values = std::collections::HashMap::new();
    src.visit("", &mut |name, t, _| {
        values.insert(name.to_string(), t.clone());
    });
    let mut copied = 0;
    let mut err = None;
    dst.visit("", &mut |name, t, _| {
        if let Some(s) = values.get(name) {
            if s.shape() != t.shape() {
                err = Some(Error::Dimension(format!(
                    "{name}: {:?} vs {:?}",
                    s.shape(),
                    t.shape()
                )));
            } else {
                t.data_mut().copy_from_slice(s.data());
                copied += 1;
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(copied),
    }
}
