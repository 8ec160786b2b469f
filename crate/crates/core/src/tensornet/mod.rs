//! Minimal dense-tensor NN kernel set with hand-derived reverse-mode
//! gradients: convolution, batch normalization, Swish, residual blocks,
//! pooling, dense layer, sigmoid, BCE loss and optimizers.
//!
//! Everything is generic over [`Scalar`], so the same code trains in f32
//! and gradient-checks in f64.

pub mod gradcheck;

mod block;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;

pub use block::ResidualBlock;
pub use layers::{
    dense_sigmoid, sigmoid_scalar, BatchNorm, Conv2d, Dense, GlobalAvgPool, Layer, Mode,
    Sigmoid, Swish,
};
pub use loss::{apply_l2_grad, bce_loss, PRED_CLAMP};
pub use model::Model;
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::{Param, Scalar, Tensor};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// He-normal initialization for a conv or dense weight tensor.
pub fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    // Box-Muller keeps this independent of rand's distribution internals,
    // so the stream is stable across rand versions.
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        data.push(T::from_f64(r * theta.cos() * std));
        if data.len() < n {
            data.push(T::from_f64(r * theta.sin() * std));
        }
    }
    Tensor { shape: shape.to_vec(), data, requires_grad: false }
}
