use serde::{Deserialize, Serialize};

use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Optimizer settings, mirrored into run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam(1e-3, 0.9, 0.999, 1e-8)
    pub fn default_adam() -> Self {
        OptimizerKind::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Optimizer<T: Scalar> {
    kind: OptimizerKind,
    // one state slot per parameter, allocated lazily on the first step
    velocity: Vec<Tensor<T>>,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            velocity: vec![],
            first_moment: vec![],
            second_moment: vec![],
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        for p in params.iter() {
            if p.grad.data.iter().any(|g| !g.as_f64().is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite gradient in {}",
                    p.name
                )));
            }
        }
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                if self.velocity.is_empty() {
                    self.velocity =
                        params.iter().map(|p| Tensor::zeros(&p.data.shape)).collect();
                }
                let lr = T::from_f64(lr);
                let mu = T::from_f64(momentum);
                for (p, v) in params.iter_mut().zip(&mut self.velocity) {
                    for i in 0..p.data.len() {
                        let vi = mu * v.data[i] + p.grad.data[i];
                        v.data[i] = vi;
                        p.data.data[i] = p.data.data[i] - lr * vi;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                if self.first_moment.is_empty() {
                    self.first_moment =
                        params.iter().map(|p| Tensor::zeros(&p.data.shape)).collect();
                    self.second_moment =
                        params.iter().map(|p| Tensor::zeros(&p.data.shape)).collect();
                }
                self.steps += 1;
                let t = self.steps as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                let one = T::one();
                let lr = T::from_f64(lr);
                let eps = T::from_f64(eps);
                let ibc1 = T::from_f64(1.0 / bc1);
                let ibc2 = T::from_f64(1.0 / bc2);
                for ((p, m), v) in params
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for i in 0..p.data.len() {
                        let g = p.grad.data[i];
                        let mi = b1 * m.data[i] + (one - b1) * g;
                        let vi = b2 * v.data[i] + (one - b2) * g * g;
                        m.data[i] = mi;
                        v.data[i] = vi;
                        let mhat = mi * ibc1;
                        let vhat = vi * ibc2;
                        p.data.data[i] = p.data.data[i] - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: Vec<f64>) -> Param<f64> {
        Param::new("p", Tensor::new(vec![v.len()], v).unwrap(), true)
    }

    #[test]
    fn sgd_plain_step() {
        let mut p = param(vec![1.0]);
        p.grad.data[0] = 2.0;
        let mut opt = Optimizer::new(OptimizerKind::Sgd { lr: 0.1, momentum: 0.0 });
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.data.data[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sgd_zero_grad_no_change() {
        let mut p = param(vec![1.5]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd { lr: 0.1, momentum: 0.0 });
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data.data[0], 1.5);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        // after one step: mhat = g, vhat = g², update = lr·g/(|g|+eps)
        let g = 0.37;
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let mut p = param(vec![2.0]);
        p.grad.data[0] = g;
        let mut opt =
            Optimizer::new(OptimizerKind::Adam { lr, beta1: b1, beta2: b2, eps });
        opt.step(&mut [&mut p]).unwrap();
        let expected = 2.0 - lr * g / (g.abs() + eps);
        assert!((p.data.data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut p = param(vec![1.0]);
        p.grad.data[0] = f64::NAN;
        let mut opt = Optimizer::new(OptimizerKind::default_adam());
        assert!(matches!(opt.step(&mut [&mut p]), Err(Error::Divergence(_))));
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = param(vec![0.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd { lr: 1.0, momentum: 0.5 });
        p.grad.data[0] = 1.0;
        opt.step(&mut [&mut p]).unwrap(); // v=1, p=-1
        p.grad.data[0] = 1.0;
        opt.step(&mut [&mut p]).unwrap(); // v=1.5, p=-2.5
        assert!((p.data.data[0] + 2.5).abs() < 1e-12);
    }
}
