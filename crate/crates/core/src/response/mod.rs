//! Classical correlation-response metrics (peak height, PCE) and the
//! crop/normalize preprocessing into 32×32 patches.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagefft::ResponseMap;

pub const PATCH_SIDE: usize = 32;

/// How the 32×32 window is placed on the response surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropMode {
    /// Frame-centered window.
    Center,
    /// Window centered on the correlation peak, wrapping at borders.
    Peak,
}

impl CropMode {
    pub fn as_u8(self) -> u8 {
        match self {
            CropMode::Center => 0,
            CropMode::Peak => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(CropMode::Center),
            1 => Ok(CropMode::Peak),
            k => Err(Error::Format(format!("unknown crop mode {k}"))),
        }
    }
}

impl std::str::FromStr for CropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(CropMode::Center),
            "peak" => Ok(CropMode::Peak),
            other => Err(Error::Config(format!("unknown crop mode '{other}'"))),
        }
    }
}

/// 32×32 crop of a response, normalized to [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePatch {
    pub data: Vec<f32>,
    pub source_resolution: u32,
    pub crop_mode: CropMode,
}

/// Classical metric values for one response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricScores {
    pub peak_height: f64,
    pub pce: f64,
    pub peak_location: (usize, usize),
}

/// Maximum sample value; ties broken by smallest (row, col).
pub fn peak_height(r: &ResponseMap) -> f64 {
    peak_location(r).1
}

/// Peak position and value; ties broken lexicographically by (row, col).
pub fn peak_location(r: &ResponseMap) -> ((usize, usize), f64) {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for (i, &v) in r.data.iter().enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    ((best_idx / r.width, best_idx % r.width), best)
}

fn peak_location_inner(r: &ResponseMap) -> (usize, usize) {
    peak_location(r).0
}

/// PCE = peak² / Σ r², no sidelobe exclusion. Always in (0, 1].
pub fn pce(r: &ResponseMap) -> Result<f64> {
    let energy: f64 = r.data.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedMetric("PCE of an all-zero response".into()));
    }
    let p = peak_height(r);
    Ok(p * p / energy)
}

pub fn metric_scores(r: &ResponseMap) -> Result<MetricScores> {
    let (loc, peak) = peak_location(r);
    Ok(MetricScores { peak_height: peak, pce: pce(r)?, peak_location: loc })
}

/// Cut the 32×32 window out of a response (still unnormalized).
pub fn crop(r: &ResponseMap, mode: CropMode) -> Result<Vec<f64>> {
    if r.width < PATCH_SIDE || r.height < PATCH_SIDE {
        return Err(Error::Size(format!(
            "response {}x{} smaller than {PATCH_SIDE}x{PATCH_SIDE}",
            r.width, r.height
        )));
    }
    let half = PATCH_SIDE / 2;
    let mut out = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
    match mode {
        CropMode::Center => {
            // the zero-shift origin of a circular correlation is element
            // (0, 0); "center" means the window centered there after the
            // usual quadrant shift, so an aligned object's peak is kept
            for y in 0..PATCH_SIDE {
                for x in 0..PATCH_SIDE {
                    let sy = (r.height + y - half) % r.height;
                    let sx = (r.width + x - half) % r.width;
                    out.push(r.get(sy, sx));
                }
            }
        }
        CropMode::Peak => {
            let (py, px) = peak_location_inner(r);
            for y in 0..PATCH_SIDE {
                for x in 0..PATCH_SIDE {
                    let sy = (py + r.height + y - half) % r.height;
                    let sx = (px + r.width + x - half) % r.width;
                    out.push(r.get(sy, sx));
                }
            }
        }
    }
    Ok(out)
}

/// Min-max normalize a raw 32×32 crop; a constant crop maps to all zeros.
pub fn normalize01(raw: &[f64], source_resolution: u32, mode: CropMode) -> Result<ResponsePatch> {
    if raw.len() != PATCH_SIDE * PATCH_SIDE {
        return Err(Error::Size("patch must be 32x32".into()));
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let data = if max > min {
        let span = max - min;
        raw.iter().map(|&v| ((v - min) / span) as f32).collect()
    } else {
        vec![0.0f32; raw.len()]
    };
    Ok(ResponsePatch { data, source_resolution, crop_mode: mode })
}

/// crop + normalize in one step.
pub fn preprocess(r: &ResponseMap, mode: CropMode) -> Result<ResponsePatch> {
    let raw = crop(r, mode)?;
    normalize01(&raw, r.width as u32, mode)
}

/// Divide a raw 32×32 crop by a reference level and clamp to [0,1].
/// Unlike min-max scaling this keeps the absolute peak height, measured
/// against what the filter produces on its own training images, so
/// patches stay comparable across filter types and image domains.
pub fn normalize_calibrated(
    raw: &[f64],
    reference: f64,
    source_resolution: u32,
    mode: CropMode,
) -> Result<ResponsePatch> {
    if raw.len() != PATCH_SIDE * PATCH_SIDE {
        return Err(Error::Size("patch must be 32x32".into()));
    }
    if !(reference.is_finite() && reference > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "calibration reference {reference} is not a positive finite value"
        )));
    }
    let data = raw.iter().map(|&v| ((v / reference).clamp(0.0, 1.0)) as f32).collect();
    Ok(ResponsePatch { data, source_resolution, crop_mode: mode })
}

/// crop + calibrated normalization in one step.
pub fn preprocess_calibrated(
    r: &ResponseMap,
    mode: CropMode,
    reference: f64,
) -> Result<ResponsePatch> {
    let raw = crop(r, mode)?;
    normalize_calibrated(&raw, reference, r.width as u32, mode)
}

impl ResponsePatch {
    /// Patch file: magic "PT32", u32 source_resolution, u8 crop_mode, then
    /// 4096 bytes of little-endian f32 samples.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"PT32")?;
        f.write_all(&self.source_resolution.to_le_bytes())?;
        f.write_all(&[self.crop_mode.as_u8()])?;
        for &v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut head = [0u8; 9];
        f.read_exact(&mut head)?;
        if &head[0..4] != b"PT32" {
            return Err(Error::Format("bad PT32 magic".into()));
        }
        let source_resolution = u32::from_le_bytes(head[4..8].try_into().unwrap());
        let crop_mode = CropMode::from_u8(head[8])?;
        let mut payload = vec![0u8; PATCH_SIDE * PATCH_SIDE * 4];
        f.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ResponsePatch { data, source_resolution, crop_mode })
    }
}
