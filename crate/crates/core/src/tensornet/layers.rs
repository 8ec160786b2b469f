use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// One differentiable stage. `backward` consumes the gradient w.r.t. the
/// layer output and returns the gradient w.r.t. its input, accumulating
/// parameter gradients along the way.
pub trait Layer<T: Scalar>: Send {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&self) -> Vec<&Param<T>> {
        vec![]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![]
    }
    /// Non-trainable state that still belongs in a checkpoint (BN running
    /// statistics).
    fn buffers(&self) -> Vec<(String, Vec<T>)> {
        vec![]
    }
    fn load_buffer(&mut self, _name: &str, _data: &[T]) -> Result<()> {
        Ok(())
    }
    /// While on, train-mode forwards rebuild BN running statistics as the
    /// cumulative mean of per-batch statistics instead of the exponential
    /// average. No-op for stateless layers.
    fn set_stats_refresh(&mut self, _on: bool) {}
    fn describe(&self) -> String;
}

fn dims4<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    if x.shape.len() != 4 {
        return Err(Error::Shape(format!("expected NCHW tensor, got {:?}", x.shape)));
    }
    Ok((x.shape[0], x.shape[1], x.shape[2], x.shape[3]))
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// 3×3 (pad 1) or 1×1 (pad 0) convolution, stride 1 or 2, no bias.
pub struct Conv2d<T: Scalar> {
    pub weight: Param<T>,
    kernel: usize,
    stride: usize,
    in_ch: usize,
    out_ch: usize,
    // forward cache
    cached_pad: Option<(Vec<T>, usize, usize, usize)>, // padded input, N, Hp, Wp
    cached_out_hw: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, weight: Tensor<T>) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::Parameter("kernel must be 1 or 3".into()));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::Parameter("stride must be 1 or 2".into()));
        }
        if weight.shape != [out_ch, in_ch, kernel, kernel] {
            return Err(Error::Shape(format!(
                "conv weight shape {:?} != [{out_ch}, {in_ch}, {kernel}, {kernel}]",
                weight.shape
            )));
        }
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight, true),
            kernel,
            stride,
            in_ch,
            out_ch,
            cached_pad: None,
            cached_out_hw: (0, 0),
        })
    }

    fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = dims4(x)?;
        if c != self.in_ch {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_ch
            )));
        }
        let p = self.pad();
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let (ho, wo) = ((h + 2 * p - self.kernel) / self.stride + 1, (w + 2 * p - self.kernel) / self.stride + 1);
        // padded copy of every input plane
        let mut xpad = vec![T::zero(); n * c * hp * wp];
        for ni in 0..n {
            for ci in 0..c {
                let src = &x.data[(ni * c + ci) * h * w..][..h * w];
                let dst = &mut xpad[(ni * c + ci) * hp * wp..][..hp * wp];
                for y in 0..h {
                    dst[(y + p) * wp + p..][..w].copy_from_slice(&src[y * w..][..w]);
                }
            }
        }

        let k = self.out_ch;
        let kernel = self.kernel;
        let stride = self.stride;
        let weight = &self.weight.data.data;
        let xpad_ref = &xpad;
        let mut out = vec![T::zero(); n * k * ho * wo];
        // each (n, k) output plane is independent
        exec::for_each_chunk_mut(&mut out, ho * wo, |plane_idx, out_plane| {
            let ni = plane_idx / k;
            let ki = plane_idx % k;
            for ci in 0..c {
                let plane = &xpad_ref[(ni * c + ci) * hp * wp..][..hp * wp];
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let wv = weight[((ki * c + ci) * kernel + ky) * kernel + kx];
                        if stride == 1 {
                            for yo in 0..ho {
                                let in_row = &plane[(yo + ky) * wp + kx..][..wo];
                                let out_row = &mut out_plane[yo * wo..][..wo];
                                for (o, &iv) in out_row.iter_mut().zip(in_row) {
                                    *o = *o + wv * iv;
                                }
                            }
                        } else {
                            for yo in 0..ho {
                                let in_row = &plane[(yo * stride + ky) * wp + kx..];
                                let out_row = &mut out_plane[yo * wo..][..wo];
                                for (xo, o) in out_row.iter_mut().enumerate() {
                                    *o = *o + wv * in_row[xo * stride];
                                }
                            }
                        }
                    }
                }
            }
        });
        self.cached_pad = Some((xpad, n, hp, wp));
        self.cached_out_hw = (ho, wo);
        Tensor::new(vec![n, k, ho, wo], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (xpad, n, hp, wp) = self
            .cached_pad
            .take()
            .ok_or_else(|| Error::ModelState("conv backward before forward".into()))?;
        let (ho, wo) = self.cached_out_hw;
        let (gn, gk, gho, gwo) = dims4(grad_out)?;
        if gn != n || gk != self.out_ch || gho != ho || gwo != wo {
            return Err(Error::Shape("conv grad shape mismatch".into()));
        }
        let (c, kernel, stride, p) = (self.in_ch, self.kernel, self.stride, self.pad());
        let (h, w) = (hp - 2 * p, wp - 2 * p);
        let k = self.out_ch;
        let weight = &self.weight.data.data;
        let dw = &mut self.weight.grad.data;
        let mut dxpad = vec![T::zero(); n * c * hp * wp];
        for ni in 0..n {
            for ki in 0..k {
                let dy_plane = &grad_out.data[(ni * k + ki) * ho * wo..][..ho * wo];
                for ci in 0..c {
                    let xplane = &xpad[(ni * c + ci) * hp * wp..][..hp * wp];
                    let dxplane = &mut dxpad[(ni * c + ci) * hp * wp..][..hp * wp];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let widx = ((ki * c + ci) * kernel + ky) * kernel + kx;
                            let wv = weight[widx];
                            let mut acc = T::zero();
                            if stride == 1 {
                                for yo in 0..ho {
                                    let dy_row = &dy_plane[yo * wo..][..wo];
                                    let x_row = &xplane[(yo + ky) * wp + kx..][..wo];
                                    let dx_row = &mut dxplane[(yo + ky) * wp + kx..][..wo];
                                    for xo in 0..wo {
                                        let g = dy_row[xo];
                                        acc = acc + g * x_row[xo];
                                        dx_row[xo] = dx_row[xo] + wv * g;
                                    }
                                }
                            } else {
                                for yo in 0..ho {
                                    let dy_row = &dy_plane[yo * wo..][..wo];
                                    let base = (yo * stride + ky) * wp + kx;
                                    for xo in 0..wo {
                                        let g = dy_row[xo];
                                        let xi = base + xo * stride;
                                        acc = acc + g * xpad[(ni * c + ci) * hp * wp + xi];
                                        dxplane[xi] = dxplane[xi] + wv * g;
                                    }
                                }
                            }
                            dw[widx] = dw[widx] + acc;
                        }
                    }
                }
            }
        }
        // strip the padding
        let mut dx = vec![T::zero(); n * c * h * w];
        for ni in 0..n {
            for ci in 0..c {
                let src = &dxpad[(ni * c + ci) * hp * wp..][..hp * wp];
                let dst = &mut dx[(ni * c + ci) * h * w..][..h * w];
                for y in 0..h {
                    dst[y * w..][..w].copy_from_slice(&src[(y + p) * wp + p..][..w]);
                }
            }
        }
        Tensor::new(vec![n, c, h, w], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight]
    }

    fn describe(&self) -> String {
        format!(
            "conv{k}x{k}({in_ch}->{out_ch}, stride {s})",
            k = self.kernel,
            in_ch = self.in_ch,
            out_ch = self.out_ch,
            s = self.stride
        )
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

pub struct BatchNorm<T: Scalar> {
    pub gain: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub stats_ready: bool,
    channels: usize,
    momentum: f64,
    eps: f64,
    // Some(j) while stats refresh is on; j batches folded in so far
    refresh_count: Option<u64>,
    cache: Option<BnCache<T>>,
}

struct BnCache<T: Scalar> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gain: Param::new(format!("{name}.gain"), Tensor::filled(&[channels], T::one()), false),
            shift: Param::new(format!("{name}.shift"), Tensor::zeros(&[channels]), false),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            stats_ready: false,
            channels,
            momentum: 0.9,
            eps: 1e-5,
            refresh_count: None,
            cache: None,
        }
    }

    fn name_prefix(&self) -> String {
        self.gain.name.trim_end_matches(".gain").to_string()
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = dims4(x)?;
        if c != self.channels {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {c}",
                self.channels
            )));
        }
        let m = n * h * w;
        let plane = h * w;
        let mut out = vec![T::zero(); x.len()];
        match mode {
            Mode::Train => {
                if m <= 1 {
                    return Err(Error::DegenerateBatch(
                        "batchnorm training needs more than one value per channel".into(),
                    ));
                }
                let mf = T::from_f64(m as f64);
                let mut xhat = vec![T::zero(); x.len()];
                let mut inv_std = vec![T::zero(); c];
                for ci in 0..c {
                    let mut mean = T::zero();
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in 0..plane {
                            mean = mean + x.data[base + i];
                        }
                    }
                    mean = mean / mf;
                    let mut var = T::zero();
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in 0..plane {
                            let d = x.data[base + i] - mean;
                            var = var + d * d;
                        }
                    }
                    var = var / mf;
                    let istd = T::one() / (var + T::from_f64(self.eps)).sqrt();
                    inv_std[ci] = istd;
                    let (g, b) = (self.gain.data.data[ci], self.shift.data.data[ci]);
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in 0..plane {
                            let xh = (x.data[base + i] - mean) * istd;
                            xhat[base + i] = xh;
                            out[base + i] = g * xh + b;
                        }
                    }
                    match self.refresh_count {
                        Some(j) => {
                            let jf = T::from_f64(j as f64);
                            let denom = T::from_f64((j + 1) as f64);
                            self.running_mean[ci] = (jf * self.running_mean[ci] + mean) / denom;
                            self.running_var[ci] = (jf * self.running_var[ci] + var) / denom;
                        }
                        None => {
                            let mom = T::from_f64(self.momentum);
                            let one_m = T::one() - mom;
                            self.running_mean[ci] = mom * self.running_mean[ci] + one_m * mean;
                            self.running_var[ci] = mom * self.running_var[ci] + one_m * var;
                        }
                    }
                }
                if let Some(j) = &mut self.refresh_count {
                    *j += 1;
                }
                self.stats_ready = true;
                self.cache = Some(BnCache { xhat, inv_std, shape: x.shape.clone() });
            }
            Mode::Infer => {
                if !self.stats_ready {
                    return Err(Error::ModelState(
                        "batchnorm running statistics are uninitialized".into(),
                    ));
                }
                for ci in 0..c {
                    let istd = T::one() / (self.running_var[ci] + T::from_f64(self.eps)).sqrt();
                    let (g, b) = (self.gain.data.data[ci], self.shift.data.data[ci]);
                    let rm = self.running_mean[ci];
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in 0..plane {
                            out[base + i] = g * (x.data[base + i] - rm) * istd + b;
                        }
                    }
                }
            }
        }
        Tensor::new(x.shape.clone(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::ModelState("batchnorm backward before forward".into()))?;
        if grad_out.shape != cache.shape {
            return Err(Error::Shape("batchnorm grad shape mismatch".into()));
        }
        let (n, c, h, w) = (cache.shape[0], cache.shape[1], cache.shape[2], cache.shape[3]);
        let plane = h * w;
        let m = T::from_f64((n * plane) as f64);
        let mut dx = vec![T::zero(); grad_out.len()];
        for ci in 0..c {
            let g = self.gain.data.data[ci];
            let istd = cache.inv_std[ci];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for i in 0..plane {
                    let dy = grad_out.data[base + i];
                    sum_dy = sum_dy + dy;
                    sum_dy_xhat = sum_dy_xhat + dy * cache.xhat[base + i];
                }
            }
            self.gain.grad.data[ci] = self.gain.grad.data[ci] + sum_dy_xhat;
            self.shift.grad.data[ci] = self.shift.grad.data[ci] + sum_dy;
            let scale = g * istd;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for i in 0..plane {
                    let dy = grad_out.data[base + i];
                    let xh = cache.xhat[base + i];
                    dx[base + i] =
                        scale * (dy - sum_dy / m - xh * sum_dy_xhat / m);
                }
            }
        }
        Tensor::new(cache.shape, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gain, &self.shift]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gain, &mut self.shift]
    }

    fn buffers(&self) -> Vec<(String, Vec<T>)> {
        let p = self.name_prefix();
        vec![
            (format!("{p}.running_mean"), self.running_mean.clone()),
            (format!("{p}.running_var"), self.running_var.clone()),
        ]
    }

    fn load_buffer(&mut self, name: &str, data: &[T]) -> Result<()> {
        if data.len() != self.channels {
            return Err(Error::Shape("batchnorm buffer length mismatch".into()));
        }
        if name.ends_with(".running_mean") {
            self.running_mean.copy_from_slice(data);
            self.stats_ready = true;
        } else if name.ends_with(".running_var") {
            self.running_var.copy_from_slice(data);
            self.stats_ready = true;
        }
        Ok(())
    }

    fn set_stats_refresh(&mut self, on: bool) {
        self.refresh_count = on.then_some(0);
    }

    fn describe(&self) -> String {
        format!("batchnorm({})", self.channels)
    }
}

// ---------------------------------------------------------------------------
// Swish
// ---------------------------------------------------------------------------

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// swish(x) = x·σ(x)
pub struct Swish<T: Scalar> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Swish<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl<T: Scalar> Default for Swish<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for Swish<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let out: Vec<T> = x.data.iter().map(|&v| v * sigmoid_scalar(v)).collect();
        self.cache = Some(x.clone());
        Tensor::new(x.shape.clone(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::ModelState("swish backward before forward".into()))?;
        if grad_out.shape != x.shape {
            return Err(Error::Shape("swish grad shape mismatch".into()));
        }
        let dx: Vec<T> = x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| {
                let s = sigmoid_scalar(v);
                g * (s + v * s * (T::one() - s))
            })
            .collect();
        Tensor::new(x.shape, dx)
    }

    fn describe(&self) -> String {
        "swish".into()
    }
}

// ---------------------------------------------------------------------------
// Global average pool
// ---------------------------------------------------------------------------

pub struct GlobalAvgPool<T: Scalar> {
    cache_shape: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        Self { cache_shape: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Scalar> Default for GlobalAvgPool<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = dims4(x)?;
        let plane = h * w;
        let scale = T::from_f64(1.0 / plane as f64);
        let mut out = vec![T::zero(); n * c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let mut acc = T::zero();
                for i in 0..plane {
                    acc = acc + x.data[base + i];
                }
                out[ni * c + ci] = acc * scale;
            }
        }
        self.cache_shape = Some(x.shape.clone());
        Tensor::new(vec![n, c], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .cache_shape
            .take()
            .ok_or_else(|| Error::ModelState("pool backward before forward".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        let scale = T::from_f64(1.0 / plane as f64);
        let mut dx = vec![T::zero(); n * c * plane];
        for ni in 0..n {
            for ci in 0..c {
                let g = grad_out.data[ni * c + ci] * scale;
                let base = (ni * c + ci) * plane;
                for i in 0..plane {
                    dx[base + i] = g;
                }
            }
        }
        Tensor::new(shape, dx)
    }

    fn describe(&self) -> String {
        "global_avg_pool".into()
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Fully connected layer [N, C] -> [N, O].
pub struct Dense<T: Scalar> {
    pub weight: Param<T>, // [O, C]
    pub bias: Param<T>,   // [O]
    in_features: usize,
    out_features: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, in_features: usize, out_features: usize, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape != [out_features, in_features] || bias.shape != [out_features] {
            return Err(Error::Shape("dense parameter shape mismatch".into()));
        }
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight, true),
            bias: Param::new(format!("{name}.bias"), bias, false),
            in_features,
            out_features,
            cache: None,
        })
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        if x.shape.len() != 2 || x.shape[1] != self.in_features {
            return Err(Error::Shape(format!(
                "dense expects [N, {}], got {:?}",
                self.in_features, x.shape
            )));
        }
        let n = x.shape[0];
        let (c, o) = (self.in_features, self.out_features);
        let mut out = vec![T::zero(); n * o];
        for ni in 0..n {
            for oi in 0..o {
                let mut acc = self.bias.data.data[oi];
                let wrow = &self.weight.data.data[oi * c..][..c];
                let xrow = &x.data[ni * c..][..c];
                for i in 0..c {
                    acc = acc + wrow[i] * xrow[i];
                }
                out[ni * o + oi] = acc;
            }
        }
        self.cache = Some(x.clone());
        Tensor::new(vec![n, o], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::ModelState("dense backward before forward".into()))?;
        let n = x.shape[0];
        let (c, o) = (self.in_features, self.out_features);
        if grad_out.shape != [n, o] {
            return Err(Error::Shape("dense grad shape mismatch".into()));
        }
        let mut dx = vec![T::zero(); n * c];
        for ni in 0..n {
            for oi in 0..o {
                let g = grad_out.data[ni * o + oi];
                self.bias.grad.data[oi] = self.bias.grad.data[oi] + g;
                let wrow = &self.weight.data.data[oi * c..][..c];
                let xrow = &x.data[ni * c..][..c];
                let dwrow = &mut self.weight.grad.data[oi * c..][..c];
                let dxrow = &mut dx[ni * c..][..c];
                for i in 0..c {
                    dwrow[i] = dwrow[i] + g * xrow[i];
                    dxrow[i] = dxrow[i] + g * wrow[i];
                }
            }
        }
        Tensor::new(vec![n, c], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn describe(&self) -> String {
        format!("dense({}->{})", self.in_features, self.out_features)
    }
}

// ---------------------------------------------------------------------------
// Sigmoid
// ---------------------------------------------------------------------------

pub struct Sigmoid<T: Scalar> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }
}

impl<T: Scalar> Default for Sigmoid<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let out: Vec<T> = x.data.iter().map(|&v| sigmoid_scalar(v)).collect();
        let out = Tensor::new(x.shape.clone(), out)?;
        self.cache = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .cache
            .take()
            .ok_or_else(|| Error::ModelState("sigmoid backward before forward".into()))?;
        if grad_out.shape != y.shape {
            return Err(Error::Shape("sigmoid grad shape mismatch".into()));
        }
        let dx: Vec<T> = y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect();
        Tensor::new(y.shape, dx)
    }

    fn describe(&self) -> String {
        "sigmoid".into()
    }
}

/// Convenience composition for the classifier head: σ(w·x + b) per sample.
pub fn dense_sigmoid<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: T) -> Result<Tensor<T>> {
    if x.shape.len() != 2 || w.shape.len() != 1 || x.shape[1] != w.shape[0] {
        return Err(Error::Shape("dense_sigmoid shape mismatch".into()));
    }
    let (n, c) = (x.shape[0], x.shape[1]);
    let mut out = vec![T::zero(); n];
    for ni in 0..n {
        let mut acc = b;
        for i in 0..c {
            acc = acc + w.data[i] * x.data[ni * c + i];
        }
        out[ni] = sigmoid_scalar(acc);
    }
    Tensor::new(vec![n], out)
}
