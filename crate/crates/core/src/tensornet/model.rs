use std::io::{Read, Write};
use std::path::Path;

use super::layers::{Layer, Mode};
use super::tensor::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

/// An ordered stack of layers trained end to end.
pub struct Model<T: Scalar> {
    layers: Vec<Box<dyn Layer<T>>>,
    forward_ran: bool,
}

impl<T: Scalar> Model<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self { layers, forward_ran: false }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        self.forward_ran = mode == Mode::Train;
        Ok(cur)
    }

    /// Backpropagate from the gradient w.r.t. the model output; parameter
    /// gradients accumulate into each `Param`.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.forward_ran {
            return Err(Error::ModelState("backward without a recorded forward pass".into()));
        }
        self.forward_ran = false;
        let mut grad = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad)?;
        }
        Ok(grad)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Number of trainable scalars (BN gains/shifts included, running
    /// statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Rebuild BN running statistics as the exact mean of per-batch
    /// statistics over `batches` under the current weights. Useful after
    /// short training runs where the exponential average still carries
    /// its initialization.
    pub fn refresh_bn_stats(&mut self, batches: &[Tensor<T>]) -> Result<()> {
        if batches.is_empty() {
            return Err(Error::Input("stats refresh needs at least one batch".into()));
        }
        for layer in &mut self.layers {
            layer.set_stats_refresh(true);
        }
        let mut result = Ok(());
        for x in batches {
            if let Err(e) = self.forward(x, Mode::Train) {
                result = Err(e);
                break;
            }
        }
        for layer in &mut self.layers {
            layer.set_stats_refresh(false);
        }
        self.forward_ran = false;
        result
    }

    pub fn describe(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.describe()).collect()
    }

    fn buffers(&self) -> Vec<(String, Vec<T>)> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    /// Checkpoint: magic "CNNW", u16 version, u32 tensor count, then per
    /// tensor: u16 name length + UTF-8 name, u8 dtype, u8 rank, dims as
    /// u32s, raw little-endian payload. Trainable params first, then BN
    /// running-stat buffers.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"CNNW")?;
        f.write_all(&1u16.to_le_bytes())?;
        let buffers = self.buffers();
        let count = self.params().len() + buffers.len();
        f.write_all(&(count as u32).to_le_bytes())?;
        let mut write_tensor = |name: &str, shape: &[usize], data: &[T]| -> Result<()> {
            let name_bytes = name.as_bytes();
            f.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            f.write_all(name_bytes)?;
            f.write_all(&[T::DTYPE])?;
            f.write_all(&[shape.len() as u8])?;
            for &d in shape {
                f.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in data {
                let raw = v.as_f64();
                match T::DTYPE {
                    0 => f.write_all(&(raw as f32).to_le_bytes())?,
                    _ => f.write_all(&raw.to_le_bytes())?,
                }
            }
            Ok(())
        };
        for p in self.params() {
            write_tensor(&p.name, &p.data.shape, &p.data.data)?;
        }
        for (name, data) in &buffers {
            write_tensor(name, &[data.len()], data)?;
        }
        Ok(())
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut head = [0u8; 4 + 2 + 4];
        f.read_exact(&mut head)?;
        if &head[0..4] != b"CNNW" {
            return Err(Error::Format("bad CNNW magic".into()));
        }
        let count = u32::from_le_bytes(head[6..10].try_into().unwrap());
        for _ in 0..count {
            let mut len = [0u8; 2];
            f.read_exact(&mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            f.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let mut meta = [0u8; 2];
            f.read_exact(&mut meta)?;
            let (dtype, rank) = (meta[0], meta[1] as usize);
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut d = [0u8; 4];
                f.read_exact(&mut d)?;
                shape.push(u32::from_le_bytes(d) as usize);
            }
            let n: usize = shape.iter().product();
            let elem = if dtype == 0 { 4 } else { 8 };
            let mut payload = vec![0u8; n * elem];
            f.read_exact(&mut payload)?;
            if dtype != T::DTYPE {
                return Err(Error::Format(format!(
                    "checkpoint dtype {dtype} does not match model dtype {}",
                    T::DTYPE
                )));
            }
            let data: Vec<T> = if dtype == 0 {
                payload
                    .chunks_exact(4)
                    .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                    .collect()
            } else {
                payload
                    .chunks_exact(8)
                    .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
                    .collect()
            };
            let mut found = false;
            for p in self.params_mut() {
                if p.name == name {
                    if p.data.shape != shape {
                        return Err(Error::Shape(format!(
                            "checkpoint tensor {name} shape {shape:?} != {:?}",
                            p.data.shape
                        )));
                    }
                    p.data.data.copy_from_slice(&data);
                    found = true;
                    break;
                }
            }
            if !found {
                for layer in &mut self.layers {
                    if layer.buffers().iter().any(|(n, _)| n == &name) {
                        layer.load_buffer(&name, &data)?;
                        found = true;
                        break;
                    }
                }
            }
            if !found {
                return Err(Error::Format(format!("checkpoint tensor {name} has no home")));
            }
        }
        Ok(())
    }
}
