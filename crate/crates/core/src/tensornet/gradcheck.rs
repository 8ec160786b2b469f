//! Central finite-difference gradient checking, in double precision.
//!
//! The checks are an independent oracle: they never touch `backward`,
//! only repeated forward passes with perturbed values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Mode};
use super::loss::{apply_l2_grad, bce_loss};
use super::model::Model;
use super::tensor::Tensor;
use crate::error::Result;

// near the eps^(1/3) optimum for losses of order 1: truncation ~h^2 and
// cancellation ~eps/h are balanced
pub const FD_STEP: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    // below this scale the h^2 truncation term of the central difference
    // dominates any relative comparison, so fall back to absolute error
    if denom < 1e-5 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Check one layer: loss = Σ r_i·y_i with a fixed random projection r.
/// Returns the worst relative error over all input and parameter elements.
pub fn check_layer(layer: &mut dyn Layer<f64>, input: &Tensor<f64>, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = layer.forward(input, Mode::Train)?;
    let r: Vec<f64> = (0..out.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
    let proj = Tensor::new(out.shape.clone(), r.clone())?;
    let dx = layer.backward(&proj)?;
    let analytic_param_grads: Vec<Vec<f64>> =
        layer.params().iter().map(|p| p.grad.data.clone()).collect();

    let loss_of = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = layer.forward(x, Mode::Train)?;
        // clear the forward cache so state stays balanced
        let _ = layer.backward(&Tensor::zeros(&y.shape));
        Ok(y.data.iter().zip(&r).map(|(a, b)| a * b).sum())
    };

    let mut worst = 0.0f64;
    // input gradient
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data[i];
        x.data[i] = orig + FD_STEP;
        let up = loss_of(layer, &x)?;
        x.data[i] = orig - FD_STEP;
        let down = loss_of(layer, &x)?;
        x.data[i] = orig;
        worst = worst.max(rel_err(dx.data[i], (up - down) / (2.0 * FD_STEP)));
    }
    // parameter gradients
    for (pi, analytic) in analytic_param_grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let orig = layer.params()[pi].data.data[i];
            layer.params_mut()[pi].data.data[i] = orig + FD_STEP;
            let up = loss_of(layer, &x)?;
            layer.params_mut()[pi].data.data[i] = orig - FD_STEP;
            let down = loss_of(layer, &x)?;
            layer.params_mut()[pi].data.data[i] = orig;
            worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    Ok(worst)
}

fn model_loss(model: &mut Model<f64>, x: &Tensor<f64>, labels: &Tensor<f64>, l2: f64) -> Result<f64> {
    let out = model.forward(x, Mode::Train)?;
    let flat = Tensor::new(vec![out.len()], out.data.clone())?;
    let (loss, grad) = bce_loss(&flat, labels, &model.params(), l2)?;
    // unwind the caches without keeping the gradients
    let shaped = Tensor::new(out.shape, grad.data)?;
    let snapshot: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data.clone()).collect();
    model.backward(&shaped)?;
    for (p, snap) in model.params_mut().into_iter().zip(snapshot) {
        p.grad.data = snap;
    }
    Ok(loss)
}

/// Check the full model against the BCE + L2 objective. Returns the worst
/// relative error over every trainable scalar.
pub fn check_model(
    model: &mut Model<f64>,
    input: &Tensor<f64>,
    labels: &Tensor<f64>,
    l2: f64,
) -> Result<f64> {
    model.zero_grad();
    let out = model.forward(input, Mode::Train)?;
    let flat = Tensor::new(vec![out.len()], out.data.clone())?;
    let (_, grad) = bce_loss(&flat, labels, &model.params(), l2)?;
    let shaped = Tensor::new(out.shape, grad.data)?;
    model.backward(&shaped)?;
    apply_l2_grad(&mut model.params_mut(), l2);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data.clone()).collect();

    let mut worst = 0.0f64;
    for pi in 0..analytic.len() {
        for i in 0..analytic[pi].len() {
            let orig = model.params()[pi].data.data[i];
            model.params_mut()[pi].data.data[i] = orig + FD_STEP;
            let up = model_loss(model, input, labels, l2)?;
            model.params_mut()[pi].data.data[i] = orig - FD_STEP;
            let down = model_loss(model, input, labels, l2)?;
            model.params_mut()[pi].data.data[i] = orig;
            worst = worst.max(rel_err(analytic[pi][i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    Ok(worst)
}
