use super::layers::{sigmoid_scalar, BatchNorm, Conv2d, Layer, Mode};
use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// Post-activation residual block: conv3×3(stride)–BN–Swish–conv3×3(1)–BN
/// plus identity skip (1×1 stride conv + BN projection when the shape
/// changes), then Swish on the sum.
pub struct ResidualBlock<T: Scalar> {
    conv1: Conv2d<T>,
    bn1: BatchNorm<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm<T>,
    projection: Option<(Conv2d<T>, BatchNorm<T>)>,
    // caches for the interior activations
    mid_pre: Option<Tensor<T>>, // input of the interior swish
    sum_pre: Option<Tensor<T>>, // input of the final swish
}

impl<T: Scalar> ResidualBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_ch: usize,
        width: usize,
        stride: usize,
        w1: Tensor<T>,
        w2: Tensor<T>,
        w_proj: Option<Tensor<T>>,
    ) -> Result<Self> {
        let needs_projection = stride != 1 || in_ch != width;
        let projection = if needs_projection {
            let wp = w_proj.ok_or_else(|| {
                Error::Shape("residual block needs a projection weight".into())
            })?;
            Some((
                Conv2d::new(&format!("{name}.proj"), in_ch, width, 1, stride, wp)?,
                BatchNorm::new(&format!("{name}.proj_bn"), width),
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, width, 3, stride, w1)?,
            bn1: BatchNorm::new(&format!("{name}.bn1"), width),
            conv2: Conv2d::new(&format!("{name}.conv2"), width, width, 3, 1, w2)?,
            bn2: BatchNorm::new(&format!("{name}.bn2"), width),
            projection,
            mid_pre: None,
            sum_pre: None,
        })
    }
}

fn swish_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data.iter().map(|&v| v * sigmoid_scalar(v)).collect();
    Tensor { shape: x.shape.clone(), data, requires_grad: false }
}

fn swish_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data
        .iter()
        .zip(&grad.data)
        .map(|(&v, &g)| {
            let s = sigmoid_scalar(v);
            g * (s + v * s * (T::one() - s))
        })
        .collect();
    Tensor { shape: x.shape.clone(), data, requires_grad: false }
}

impl<T: Scalar> Layer<T> for ResidualBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let main = self.conv1.forward(x, mode)?;
        let main = self.bn1.forward(&main, mode)?;
        let mid = swish_forward(&main);
        self.mid_pre = Some(main);
        let main = self.conv2.forward(&mid, mode)?;
        let main = self.bn2.forward(&main, mode)?;
        let skip = match &mut self.projection {
            Some((conv, bn)) => {
                let s = conv.forward(x, mode)?;
                bn.forward(&s, mode)?
            }
            None => x.clone(),
        };
        if !main.same_shape(&skip) {
            return Err(Error::Shape("residual branch shapes disagree".into()));
        }
        let sum = Tensor::new(
            main.shape.clone(),
            main.data.iter().zip(&skip.data).map(|(&a, &b)| a + b).collect(),
        )?;
        let out = swish_forward(&sum);
        self.sum_pre = Some(sum);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let sum_pre = self
            .sum_pre
            .take()
            .ok_or_else(|| Error::ModelState("block backward before forward".into()))?;
        let d_sum = swish_backward(&sum_pre, grad_out);
        // main branch
        let d_main = self.bn2.backward(&d_sum)?;
        let d_mid = self.conv2.backward(&d_main)?;
        let mid_pre = self.mid_pre.take().unwrap();
        let d_pre = swish_backward(&mid_pre, &d_mid);
        let d_bn1 = self.bn1.backward(&d_pre)?;
        let mut dx = self.conv1.backward(&d_bn1)?;
        // skip branch
        match &mut self.projection {
            Some((conv, bn)) => {
                let d_proj = bn.backward(&d_sum)?;
                let d_skip = conv.backward(&d_proj)?;
                for (a, &b) in dx.data.iter_mut().zip(&d_skip.data) {
                    *a = *a + b;
                }
            }
            None => {
                for (a, &b) in dx.data.iter_mut().zip(&d_sum.data) {
                    *a = *a + b;
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.conv1.params();
        out.extend(self.bn1.params());
        out.extend(self.conv2.params());
        out.extend(self.bn2.params());
        if let Some((conv, bn)) = &self.projection {
            out.extend(conv.params());
            out.extend(bn.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.conv1.params_mut();
        out.extend(self.bn1.params_mut());
        out.extend(self.conv2.params_mut());
        out.extend(self.bn2.params_mut());
        if let Some((conv, bn)) = &mut self.projection {
            out.extend(conv.params_mut());
            out.extend(bn.params_mut());
        }
        out
    }

    fn buffers(&self) -> Vec<(String, Vec<T>)> {
        let mut out = self.bn1.buffers();
        out.extend(self.bn2.buffers());
        if let Some((_, bn)) = &self.projection {
            out.extend(bn.buffers());
        }
        out
    }

    fn load_buffer(&mut self, name: &str, data: &[T]) -> Result<()> {
        for bn in [&mut self.bn1, &mut self.bn2]
            .into_iter()
            .chain(self.projection.iter_mut().map(|(_, bn)| bn))
        {
            if bn.buffers().iter().any(|(n, _)| n == name) {
                return bn.load_buffer(name, data);
            }
        }
        Ok(())
    }

    fn set_stats_refresh(&mut self, on: bool) {
        self.bn1.set_stats_refresh(on);
        self.bn2.set_stats_refresh(on);
        if let Some((_, bn)) = &mut self.projection {
            bn.set_stats_refresh(on);
        }
    }

    fn describe(&self) -> String {
        format!(
            "resblock({}, {}{})",
            self.conv1.describe(),
            self.conv2.describe(),
            if self.projection.is_some() { ", projected skip" } else { "" }
        )
    }
}
