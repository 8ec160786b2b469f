//! Filter file format: magic "CFLT", u16 version, u8 kind, u32 width,
//! u32 height, four little-endian f64 params (α, β, γ, noise_c), 32-byte
//! training digest, then W·H complex pairs as f32 (re, im) row-major.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{CorrelationFilter, FilterKind, FilterParams};
use crate::error::{Error, Result};
use crate::imagefft::Spectrum2D;

const VERSION: u16 = 1;

impl CorrelationFilter {
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"CFLT")?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&[self.kind.as_u8()])?;
        f.write_all(&(self.h.width as u32).to_le_bytes())?;
        f.write_all(&(self.h.height as u32).to_le_bytes())?;
        for p in [self.params.alpha, self.params.beta, self.params.gamma, self.params.noise_c]
        {
            f.write_all(&p.to_le_bytes())?;
        }
        f.write_all(&self.training_digest)?;
        for v in &self.h.data {
            f.write_all(&(v.re as f32).to_le_bytes())?;
            f.write_all(&(v.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut head = [0u8; 4 + 2 + 1 + 4 + 4];
        f.read_exact(&mut head)?;
        if &head[0..4] != b"CFLT" {
            return Err(Error::Format("bad CFLT magic".into()));
        }
        let version = u16::from_le_bytes(head[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported CFLT version {version}")));
        }
        let kind = FilterKind::from_u8(head[6])?;
        let width = u32::from_le_bytes(head[7..11].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(head[11..15].try_into().unwrap()) as usize;
        let mut params = [0u8; 32];
        f.read_exact(&mut params)?;
        let p: Vec<f64> = params
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut digest = [0u8; 32];
        f.read_exact(&mut digest)?;
        let mut payload = vec![0u8; width * height * 8];
        f.read_exact(&mut payload)?;
        let data: Vec<Complex64> = payload
            .chunks_exact(8)
            .map(|c| {
                Complex64::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
                )
            })
            .collect();
        Ok(CorrelationFilter {
            kind,
            h: Spectrum2D::new(width, height, data)?,
            params: FilterParams { alpha: p[0], beta: p[1], gamma: p[2], noise_c: p[3] },
            training_digest: digest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{synthesize_otmach, TrainingSet};
    use super::*;
    use crate::imagefft::Image2D;

    #[test]
    fn params_round_trip_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let img =
            Image2D::new(8, 8, (0..64).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let ts = TrainingSet::from_images(vec![img]).unwrap();
        let filter = synthesize_otmach(&ts, 0.01, 1.0, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.cflt");
        filter.write_file(&path).unwrap();
        let back = CorrelationFilter::read_file(&path).unwrap();
        assert_eq!(back.kind, filter.kind);
        assert_eq!(back.params, filter.params);
        assert_eq!(back.training_digest, filter.training_digest);
        assert_eq!(back.h.width, 8);
        for (a, b) in back.h.data.iter().zip(&filter.h.data) {
            assert!((a.re - b.re).abs() <= (b.re as f32).abs() as f64 * 1e-6 + 1e-12);
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(CorrelationFilter::read_file(&path).is_err());
    }
}
