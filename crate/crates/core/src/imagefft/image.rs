use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Real-valued grayscale raster, row-major, nominal range [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Non-negative real correlation response surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

pub(crate) fn is_pow2(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Size(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// True when the raster is square with a power-of-two side.
    pub fn is_pow2_square(&self) -> bool {
        self.width == self.height && is_pow2(self.width)
    }

    pub(crate) fn require_pow2(&self) -> Result<()> {
        if !is_pow2(self.width) || !is_pow2(self.height) {
            return Err(Error::Size(format!(
                "sides must be powers of two, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Circularly shift the image by (dy, dx); used by tests and the
    /// shift-convention sweep.
    pub fn circular_shift(&self, dy: usize, dx: usize) -> Image2D {
        let mut out = Image2D::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let ny = (y + dy) % self.height;
                let nx = (x + dx) % self.width;
                out.data[ny * self.width + nx] = self.data[y * self.width + x];
            }
        }
        out
    }

    /// Binary PGM (P5) encoding, maxval 255.
    pub fn pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.data.len() + 32);
        let _ = write!(buf, "P5\n{} {}\n255\n", self.width, self.height);
        for &v in &self.data {
            let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            buf.push(q);
        }
        buf
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.pgm_bytes())?;
        Ok(())
    }

    /// Read a binary PGM (P5) with maxval 255 or 65535, scaled to [0,1].
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::parse_pgm(&bytes)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Result<String> {
            // skip whitespace and comments
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(bytes)?;
        if magic != "P5" {
            return Err(Error::Format(format!("expected P5 magic, got {magic}")));
        }
        let width: usize = token(bytes)?
            .parse()
            .map_err(|_| Error::Format("bad PGM width".into()))?;
        let height: usize = token(bytes)?
            .parse()
            .map_err(|_| Error::Format("bad PGM height".into()))?;
        let maxval: usize = token(bytes)?
            .parse()
            .map_err(|_| Error::Format("bad PGM maxval".into()))?;
        pos += 1; // single whitespace after maxval
        let n = width * height;
        let data = match maxval {
            255 => {
                if bytes.len() < pos + n {
                    return Err(Error::Format("truncated PGM payload".into()));
                }
                bytes[pos..pos + n].iter().map(|&b| b as f64 / 255.0).collect()
            }
            65535 => {
                if bytes.len() < pos + 2 * n {
                    return Err(Error::Format("truncated PGM payload".into()));
                }
                bytes[pos..pos + 2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                    .collect()
            }
            m => return Err(Error::Format(format!("unsupported PGM maxval {m}"))),
        };
        Image2D::new(width, height, data)
    }

    /// Write as raw little-endian f32 plane: "IMG2", u32 width, u32 height,
    /// u32 reserved, then the samples.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"IMG2")?;
        f.write_all(&(self.width as u32).to_le_bytes())?;
        f.write_all(&(self.height as u32).to_le_bytes())?;
        f.write_all(&0u32.to_le_bytes())?;
        for &v in &self.data {
            f.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = [0u8; 16];
        f.read_exact(&mut header)?;
        if &header[0..4] != b"IMG2" {
            return Err(Error::Format("bad IMG2 magic".into()));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; width * height * 4];
        f.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Image2D::new(width, height, data)
    }
}

impl ResponseMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Size("response data length mismatch".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}
