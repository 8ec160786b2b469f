use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::patch_tensor;
use crate::error::{Error, Result};
use crate::response::ResponsePatch;
use crate::tensornet::{
    apply_l2_grad, bce_loss, Mode, Model, Optimizer, OptimizerKind, Tensor,
};

#[derive(Debug, Clone)]
pub struct LabeledPatch {
    pub patch: ResponsePatch,
    /// true = true class (label 1), false = false class (label 0)
    pub label: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub optimizer: OptimizerKind,
    /// Stratified validation fraction held out from the training patches.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            l2: 0.005,
            seed: 0,
            augment: AugmentConfig::default(),
            optimizer: OptimizerKind::default_adam(),
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 0.5)".into()));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub param_count: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub epochs: Vec<EpochStats>,
    pub final_train_accuracy: f64,
    pub final_val_accuracy: Option<f64>,
}

/// Train a model in place over labeled patches. Deterministic given
/// (dataset order, config): every random draw comes from one seeded
/// stream owned by this loop.
pub fn train(
    model: &mut Model<f32>,
    dataset: &[LabeledPatch],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let pos: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].label).collect();
    let neg: Vec<usize> = (0..dataset.len()).filter(|&i| !dataset[i].label).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Input("training needs both classes present".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // label-stratified validation split, disjoint from training
    let split = |idx: &[usize], rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<usize>) {
        let mut shuffled = idx.to_vec();
        shuffled.shuffle(rng);
        let n_val = (shuffled.len() as f64 * cfg.val_fraction).floor() as usize;
        let val = shuffled.split_off(shuffled.len() - n_val);
        (shuffled, val)
    };
    let (train_pos, val_pos) = split(&pos, &mut rng);
    let (train_neg, val_neg) = split(&neg, &mut rng);
    let mut train_idx: Vec<usize> = train_pos.into_iter().chain(train_neg).collect();
    let val_idx: Vec<usize> = val_pos.into_iter().chain(val_neg).collect();

    let mut opt = Optimizer::new(cfg.optimizer);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut correct = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // batchnorm needs more than one sample
            }
            let patches: Vec<ResponsePatch> = chunk
                .iter()
                .map(|&i| augment(&dataset[i].patch, &cfg.augment, &mut rng))
                .collect();
            let labels: Vec<f32> =
                chunk.iter().map(|&i| if dataset[i].label { 1.0 } else { 0.0 }).collect();
            let x = patch_tensor::<f32>(&patches);
            model.zero_grad();
            let out = model.forward(&x, Mode::Train)?;
            let flat = Tensor::new(vec![out.len()], out.data.clone())?;
            let label_t = Tensor::new(vec![labels.len()], labels.clone())?;
            let (loss, grad) = bce_loss(&flat, &label_t, &model.params(), cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss diverged at epoch {epoch}")));
            }
            for (p, &y) in out.data.iter().zip(&labels) {
                if (*p >= 0.5) == (y >= 0.5) {
                    correct += 1;
                }
            }
            let shaped = Tensor::new(out.shape, grad.data)?;
            model.backward(&shaped)?;
            apply_l2_grad(&mut model.params_mut(), cfg.l2);
            opt.step(&mut model.params_mut())?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;
        let train_accuracy = correct as f64 / seen as f64;
        let val_accuracy = if val_idx.is_empty() {
            None
        } else {
            Some(eval_accuracy(model, dataset, &val_idx, cfg.batch_size)?)
        };
        epochs.push(EpochStats { epoch, train_loss, train_accuracy, val_accuracy });
    }

    // Rebuild BN running statistics from clean patches under the final
    // weights; the exponential average lags on short runs.
    let refresh: Vec<Tensor<f32>> = train_idx
        .chunks(cfg.batch_size)
        .filter(|chunk| chunk.len() >= 2)
        .map(|chunk| {
            let patches: Vec<ResponsePatch> =
                chunk.iter().map(|&i| dataset[i].patch.clone()).collect();
            patch_tensor(&patches)
        })
        .collect();
    model.refresh_bn_stats(&refresh)?;

    let final_train_accuracy = eval_accuracy(model, dataset, &train_idx, cfg.batch_size)?;
    let final_val_accuracy = if val_idx.is_empty() {
        None
    } else {
        Some(eval_accuracy(model, dataset, &val_idx, cfg.batch_size)?)
    };
    Ok(TrainReport {
        config: *cfg,
        param_count: model.param_count(),
        train_count: train_idx.len(),
        val_count: val_idx.len(),
        final_train_accuracy,
        final_val_accuracy,
        epochs,
    })
}

fn eval_accuracy(
    model: &mut Model<f32>,
    dataset: &[LabeledPatch],
    idx: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in idx.chunks(batch_size) {
        let patches: Vec<ResponsePatch> =
            chunk.iter().map(|&i| dataset[i].patch.clone()).collect();
        let x = patch_tensor::<f32>(&patches);
        let out = model.forward(&x, Mode::Infer)?;
        for (p, &i) in out.data.iter().zip(chunk) {
            if (*p >= 0.5) == dataset[i].label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::build_model;
    use super::*;
    use crate::response::CropMode;
    use rand::Rng;

    /// Gaussian bump vs flat noise, trivially separable.
    fn sanity_dataset(n_per_class: usize, seed: u64) -> Vec<LabeledPatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for label in [true, false] {
            for _ in 0..n_per_class {
                let cy = 15.5 + rng.gen::<f64>() * 2.0 - 1.0;
                let cx = 15.5 + rng.gen::<f64>() * 2.0 - 1.0;
                let data: Vec<f32> = (0..1024)
                    .map(|i| {
                        let (y, x) = ((i / 32) as f64, (i % 32) as f64);
                        let noise = rng.gen::<f64>() * 0.2;
                        let v = if label {
                            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                            (-d2 / 6.0).exp() + noise
                        } else {
                            noise * 4.0
                        };
                        v as f32
                    })
                    .collect();
                out.push(LabeledPatch {
                    patch: ResponsePatch {
                        data,
                        source_resolution: 64,
                        crop_mode: CropMode::Center,
                    },
                    label,
                });
            }
        }
        out
    }

    fn quick_config(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            seed,
            augment: AugmentConfig { noise_sigma_max: 0.02, rot_max_deg: 20.0, ..AugmentConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_dataset_trains_to_high_accuracy() {
        let data = sanity_dataset(40, 1);
        let mut model = build_model::<f32>(4, 7).unwrap();
        let report = train(&mut model, &data, &quick_config(2, 5)).unwrap();
        // accuracy on the clean (unaugmented) patches after training
        let scores = super::super::predict_batch(&mut model, &data.iter().map(|d| d.patch.clone()).collect::<Vec<_>>()).unwrap();
        let correct = scores
            .iter()
            .zip(&data)
            .filter(|(s, d)| (**s >= 0.5) == d.label)
            .count();
        let clean_acc = correct as f64 / data.len() as f64;
        assert!(clean_acc >= 0.99, "clean accuracy {clean_acc}, report {report:?}");
        // held-out patches of each class land on the right side of 0.5
        let held_out = sanity_dataset(1, 99);
        let (class_t, score_t) =
            super::super::predict(&mut model, &held_out[0].patch, 0.5).unwrap();
        let (class_f, score_f) =
            super::super::predict(&mut model, &held_out[1].patch, 0.5).unwrap();
        assert_eq!(class_t, super::super::PredictedClass::TrueClass);
        assert_eq!(class_f, super::super::PredictedClass::FalseClass);
        assert!(score_t > score_f + 0.05, "scores {score_t} vs {score_f}");
    }

    #[test]
    fn same_seed_bit_identical() {
        let data = sanity_dataset(10, 3);
        let run = |seed| {
            let mut model = build_model::<f32>(2, 11).unwrap();
            let report = train(&mut model, &data, &quick_config(seed, 2)).unwrap();
            let params: Vec<f32> = model
                .params()
                .iter()
                .flat_map(|p| p.data.data.iter().copied())
                .collect();
            (report.epochs.last().unwrap().train_loss, params)
        };
        let (loss_a, params_a) = run(5);
        let (loss_b, params_b) = run(5);
        assert_eq!(loss_a.to_bits(), loss_b.to_bits());
        assert_eq!(params_a, params_b);
    }

    #[test]
    fn loss_decreases_over_early_epochs() {
        let data = sanity_dataset(30, 4);
        let mut model = build_model::<f32>(4, 13).unwrap();
        let report = train(&mut model, &data, &quick_config(6, 3)).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses[1] < losses[0] && losses[2] < losses[1], "losses {losses:?}");
    }

    #[test]
    fn single_class_dataset_rejected() {
        let mut data = sanity_dataset(8, 5);
        data.retain(|d| d.label);
        let mut model = build_model::<f32>(2, 17).unwrap();
        assert!(matches!(
            train(&mut model, &data, &quick_config(7, 1)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn split_is_disjoint_and_stratified() {
        let data = sanity_dataset(50, 6);
        let mut model = build_model::<f32>(2, 19).unwrap();
        let report = train(&mut model, &data, &quick_config(8, 1)).unwrap();
        assert_eq!(report.train_count + report.val_count, data.len());
        assert_eq!(report.val_count, 10); // 5 per class
    }
}
