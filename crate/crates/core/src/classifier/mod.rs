//! The slim residual classifier: architecture assembly, augmented
//! training over labeled response patches, and inference.

mod augment;
mod train;

pub use augment::{augment, rotate_bilinear, AugmentConfig};
pub use train::{train, LabeledPatch, TrainConfig, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::response::{ResponsePatch, PATCH_SIDE};
use crate::tensornet::{
    he_normal, BatchNorm, Conv2d, Dense, GlobalAvgPool, Layer, Mode, Model, ResidualBlock,
    Scalar, Sigmoid, Swish, Tensor,
};

pub const DEFAULT_BASE_WIDTH: usize = 21;

/// Build the classifier: input BN → conv3×3 stem → BN → Swish → 4 stages
/// of 2 residual blocks (widths w, 2w, 4w, 8w; stride 2 entering stages
/// 2–4) → global average pool → dense(1) → sigmoid.
///
/// Conv weights are He-normal from the seed; the dense head starts at
/// zero so an untrained model scores exactly 0.5.
pub fn build_model<T: Scalar>(base_width: usize, seed: u64) -> Result<Model<T>> {
    if base_width < 1 {
        return Err(Error::Parameter("base_width must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = base_width;
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    layers.push(Box::new(BatchNorm::new("input_bn", 1)));
    layers.push(Box::new(Conv2d::new(
        "stem",
        1,
        w,
        3,
        1,
        he_normal(&[w, 1, 3, 3], 9, &mut rng),
    )?));
    layers.push(Box::new(BatchNorm::new("stem_bn", w)));
    layers.push(Box::new(Swish::new()));
    let mut in_ch = w;
    for (stage, &width) in [w, 2 * w, 4 * w, 8 * w].iter().enumerate() {
        for block in 0..2 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let name = format!("stage{}.block{}", stage + 1, block);
            let w1 = he_normal(&[width, in_ch, 3, 3], in_ch * 9, &mut rng);
            let w2 = he_normal(&[width, width, 3, 3], width * 9, &mut rng);
            let proj = (stride != 1 || in_ch != width)
                .then(|| he_normal(&[width, in_ch, 1, 1], in_ch, &mut rng));
            layers.push(Box::new(ResidualBlock::new(&name, in_ch, width, stride, w1, w2, proj)?));
            in_ch = width;
        }
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    layers.push(Box::new(Dense::new(
        "head",
        in_ch,
        1,
        Tensor::zeros(&[1, in_ch]),
        Tensor::zeros(&[1]),
    )?));
    layers.push(Box::new(Sigmoid::new()));
    Ok(Model::new(layers))
}

/// Exact trainable-scalar count of `build_model(base_width, ..)`, derived
/// layer by layer; the analytic cross-check for `Model::param_count`.
pub fn expected_param_count(base_width: usize) -> usize {
    let w = base_width;
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k;
    let bn = |ch: usize| 2 * ch;
    let mut total = bn(1) + conv(1, w, 3) + bn(w);
    let mut in_ch = w;
    for (stage, width) in [w, 2 * w, 4 * w, 8 * w].into_iter().enumerate() {
        for block in 0..2 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            total += conv(in_ch, width, 3) + bn(width) + conv(width, width, 3) + bn(width);
            if stride != 1 || in_ch != width {
                total += conv(in_ch, width, 1) + bn(width);
            }
            in_ch = width;
        }
    }
    total + in_ch + 1 // dense head
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictedClass {
    TrueClass,
    FalseClass,
}

/// Inference over a single patch with frozen parameters (BN running
/// statistics must be initialized).
pub fn predict<T: Scalar>(
    model: &mut Model<T>,
    patch: &ResponsePatch,
    threshold: f64,
) -> Result<(PredictedClass, f64)> {
    let x = patch_tensor(std::slice::from_ref(patch));
    let out = model.forward(&x, Mode::Infer)?;
    let score = out.data[0].as_f64();
    let class = if score >= threshold {
        PredictedClass::TrueClass
    } else {
        PredictedClass::FalseClass
    };
    Ok((class, score))
}

/// Batched inference scores.
pub fn predict_batch<T: Scalar>(model: &mut Model<T>, patches: &[ResponsePatch]) -> Result<Vec<f64>> {
    if patches.is_empty() {
        return Ok(vec![]);
    }
    let x = patch_tensor(patches);
    let out = model.forward(&x, Mode::Infer)?;
    Ok(out.data.iter().map(|v| v.as_f64()).collect())
}

pub(crate) fn patch_tensor<T: Scalar>(patches: &[ResponsePatch]) -> Tensor<T> {
    let n = patches.len();
    let mut data = Vec::with_capacity(n * PATCH_SIDE * PATCH_SIDE);
    for p in patches {
        data.extend(p.data.iter().map(|&v| T::from_f64(v as f64)));
    }
    Tensor { shape: vec![n, 1, PATCH_SIDE, PATCH_SIDE], data, requires_grad: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::CropMode;
    use rand::Rng;

    #[test]
    fn default_width_parameter_budget() {
        let model = build_model::<f32>(DEFAULT_BASE_WIDTH, 0).unwrap();
        let count = model.param_count();
        assert_eq!(count, expected_param_count(DEFAULT_BASE_WIDTH));
        assert!((1_000_000..=1_400_000).contains(&count), "count = {count}");
    }

    #[test]
    fn micro_model_count_matches_hand_formula() {
        let model = build_model::<f32>(2, 0).unwrap();
        assert_eq!(model.param_count(), expected_param_count(2));
    }

    #[test]
    fn width_doubling_roughly_quadruples_conv_params() {
        let a = expected_param_count(8) as f64;
        let b = expected_param_count(16) as f64;
        assert!((b / a - 4.0).abs() < 0.25, "ratio {}", b / a);
    }

    #[test]
    fn forward_shape_and_range() {
        let mut model = build_model::<f32>(4, 1).unwrap();
        let x = Tensor::zeros(&[2, 1, 32, 32]);
        let y = model.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape, vec![2, 1]);
        for v in &y.data {
            assert!(v.is_finite() && *v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn untrained_model_scores_half() {
        let mut model = build_model::<f32>(4, 2).unwrap();
        // one train-mode pass to populate BN running stats
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let warm = Tensor::new(
            vec![4, 1, 32, 32],
            (0..4 * 1024).map(|_| rng.gen::<f32>()).collect(),
        )
        .unwrap();
        model.forward(&warm, Mode::Train).unwrap();
        let patch = ResponsePatch {
            data: (0..1024).map(|i| (i % 7) as f32 / 7.0).collect(),
            source_resolution: 64,
            crop_mode: CropMode::Center,
        };
        let (_, score) = predict(&mut model, &patch, 0.5).unwrap();
        assert_eq!(score, 0.5); // zeroed dense head
    }

    #[test]
    fn predict_without_bn_stats_is_model_state_error() {
        let mut model = build_model::<f32>(4, 4).unwrap();
        let patch = ResponsePatch {
            data: vec![0.0; 1024],
            source_resolution: 64,
            crop_mode: CropMode::Center,
        };
        assert!(matches!(
            predict(&mut model, &patch, 0.5),
            Err(crate::Error::ModelState(_))
        ));
    }

    #[test]
    fn predict_is_deterministic() {
        let mut model = build_model::<f32>(4, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let warm = Tensor::new(
            vec![4, 1, 32, 32],
            (0..4 * 1024).map(|_| rng.gen::<f32>()).collect(),
        )
        .unwrap();
        model.forward(&warm, Mode::Train).unwrap();
        let patch = ResponsePatch {
            data: (0..1024).map(|_| rng.gen::<f32>()).collect(),
            source_resolution: 64,
            crop_mode: CropMode::Center,
        };
        let (_, a) = predict(&mut model, &patch, 0.5).unwrap();
        let (_, b) = predict(&mut model, &patch, 0.5).unwrap();
        assert_eq!(a, b);
    }
}
