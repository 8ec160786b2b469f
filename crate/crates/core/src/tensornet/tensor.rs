use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar type the network runs in: f32 for training, f64 for gradient
/// checking.
pub trait Scalar:
    Float + std::iter::Sum + std::fmt::Debug + Send + Sync + Copy + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    const DTYPE: u8;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    const DTYPE: u8 = 0;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    const DTYPE: u8 = 1;
}

/// Dense N-dimensional real array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n], requires_grad: false }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![v; n], requires_grad: false }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub data: Tensor<T>,
    pub grad: Tensor<T>,
    /// Included in the L2 penalty (conv/dense weights yes, BN gains/shifts
    /// and biases no).
    pub weight_decay: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, data: Tensor<T>, weight_decay: bool) -> Self {
        let mut data = data;
        data.requires_grad = true;
        let grad = Tensor::zeros(&data.shape);
        Self { name: name.into(), data, grad, weight_decay }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad.data {
            *g = T::zero();
        }
    }
}
