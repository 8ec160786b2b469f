use num_complex::Complex64;
use std::f64::consts::PI;

use super::image::{is_pow2, Image2D};
use crate::error::{Error, Result};

/// Complex 2D frequency-domain array, same shape as its source image.
/// DC bin sits at index (0,0).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Size("spectrum data length mismatch".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![Complex64::new(0.0, 0.0); width * height] }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    fn require_pow2(&self) -> Result<()> {
        if !is_pow2(self.width) || !is_pow2(self.height) {
            return Err(Error::Size(format!(
                "sides must be powers of two, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Iterative radix-2 decimation-in-time FFT on a single line.
/// `sign` is -1 for the forward transform, +1 for the inverse (unnormalized).
fn fft_line(buf: &mut [Complex64], sign: f64, twiddles: &[Complex64]) {
    let n = buf.len();
    debug_assert!(is_pow2(n));
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let w = if sign < 0.0 { w.conj() } else { w };
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

/// Twiddle table: e^{+2πi k/n} for k in 0..n/2.
fn twiddle_table(n: usize) -> Vec<Complex64> {
    (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect()
}

fn fft2_complex(width: usize, height: usize, data: &mut [Complex64], sign: f64) {
    let tw_w = twiddle_table(width);
    // rows
    for row in data.chunks_exact_mut(width) {
        fft_line(row, sign, &tw_w);
    }
    // columns through a scratch buffer
    let tw_h = twiddle_table(height);
    let mut col = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        fft_line(&mut col, sign, &tw_h);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
}

/// Unnormalized forward 2D DFT.
pub fn fft2(img: &Image2D) -> Result<Spectrum2D> {
    img.require_pow2()?;
    let mut data: Vec<Complex64> =
        img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_complex(img.width(), img.height(), &mut data, -1.0);
    Spectrum2D::new(img.width(), img.height(), data)
}

/// Inverse 2D DFT carrying the 1/(W·H) normalization, so `ifft2(fft2(x)) = x`.
pub fn ifft2(spec: &Spectrum2D) -> Result<Spectrum2D> {
    spec.require_pow2()?;
    let mut data = spec.data.clone();
    fft2_complex(spec.width, spec.height, &mut data, 1.0);
    let scale = 1.0 / (spec.width * spec.height) as f64;
    for v in &mut data {
        *v *= scale;
    }
    Spectrum2D::new(spec.width, spec.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(N^4) DFT, the independent oracle for fft2.
    pub(crate) fn dft2_oracle(img: &Image2D) -> Spectrum2D {
        let (w, h) = (img.width(), img.height());
        let mut out = Spectrum2D::zeros(w, h);
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let phase = -2.0 * PI
                            * (u as f64 * x as f64 / w as f64
                                + v as f64 * y as f64 / h as f64);
                        acc += img.get(y, x) * Complex64::from_polar(1.0, phase);
                    }
                }
                out.data[v * w + u] = acc;
            }
        }
        out
    }

    fn random_image(w: usize, h: usize, seed: u64) -> Image2D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image2D::new(w, h, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_image_has_only_dc() {
        let img = Image2D::new(8, 8, vec![1.0; 64]).unwrap();
        let spec = fft2(&img).unwrap();
        assert!((spec.get(0, 0) - Complex64::new(64.0, 0.0)).norm() < 1e-9);
        for (i, v) in spec.data.iter().enumerate() {
            if i != 0 {
                assert!(v.norm() < 1e-9, "bin {i} = {v}");
            }
        }
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut img = Image2D::zeros(8, 8);
        img.set(0, 0, 1.0);
        let spec = fft2(&img).unwrap();
        for v in &spec.data {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_dft_16x16() {
        let img = random_image(16, 16, 7);
        let spec = fft2(&img).unwrap();
        let oracle = dft2_oracle(&img);
        let scale: f64 = oracle.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in spec.data.iter().zip(&oracle.data) {
            assert!((a - b).norm() / scale < 1e-6);
        }
    }

    #[test]
    fn round_trip_identity() {
        let img = random_image(8, 8, 11);
        let back = ifft2(&fft2(&img).unwrap()).unwrap();
        for (a, &b) in back.data.iter().zip(img.data()) {
            assert!((a.re - b).abs() < 1e-6 && a.im.abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_of_flat_spectrum_is_delta() {
        let spec = Spectrum2D::new(8, 8, vec![Complex64::new(1.0, 0.0); 64]).unwrap();
        let out = ifft2(&spec).unwrap();
        assert!((out.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        for v in &out.data[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn ifft2_is_linear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            Spectrum2D::new(
                8,
                8,
                (0..64)
                    .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
            )
            .unwrap()
        };
        let x = mk(&mut rng);
        let y = mk(&mut rng);
        let (a, b) = (1.7, -0.4);
        let combo = Spectrum2D::new(
            8,
            8,
            x.data.iter().zip(&y.data).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let lhs = ifft2(&combo).unwrap();
        let ix = ifft2(&x).unwrap();
        let iy = ifft2(&y).unwrap();
        for i in 0..64 {
            let rhs = a * ix.data[i] + b * iy.data[i];
            assert!((lhs.data[i] - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn non_pow2_rejected() {
        let img = Image2D::new(6, 6, vec![0.0; 36]).unwrap();
        assert!(matches!(fft2(&img), Err(Error::Size(_))));
    }

    #[test]
    fn parseval() {
        let img = random_image(16, 16, 21);
        let spec = fft2(&img).unwrap();
        let spatial: f64 = img.data().iter().map(|v| v * v).sum();
        let freq: f64 =
            spec.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / (16.0 * 16.0);
        assert!((spatial - freq).abs() / spatial < 1e-5);
    }
}
