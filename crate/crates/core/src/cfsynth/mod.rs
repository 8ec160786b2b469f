//! Synthesis of invariant correlation filters from true-class training data.
//!
//! Two families are implemented: the optimal-tradeoff MACH filter (closed
//! per-frequency form) and the MINACE filter (constrained energy
//! minimization over a spectral envelope). Both are deterministic.

mod fileio;
mod linalg;
mod minace;
mod otmach;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imagefft::{cross_correlate, Image2D, ResponseMap, Spectrum2D};

pub use minace::{default_minace_noise, synthesize_minace};
pub use otmach::{otmach_whitening_peak, synthesize_otmach};

/// Training images plus per-image origin constraint values u_i.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    images: Vec<Image2D>,
    constraints: Vec<f64>,
}

impl TrainingSet {
    /// True-class set with all constraints at 1.0.
    pub fn from_images(images: Vec<Image2D>) -> Result<Self> {
        let n = images.len();
        Self::with_constraints(images, vec![1.0; n])
    }

    pub fn with_constraints(images: Vec<Image2D>, constraints: Vec<f64>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Input("training set must not be empty".into()));
        }
        if images.len() != constraints.len() {
            return Err(Error::Input("one constraint per training image".into()));
        }
        let (w, h) = (images[0].width(), images[0].height());
        if !images.iter().all(|i| i.width() == w && i.height() == h) {
            return Err(Error::Dimension("training images must share one shape".into()));
        }
        if !constraints.iter().all(|u| u.is_finite()) {
            return Err(Error::Input("constraints must be finite".into()));
        }
        Ok(Self { images, constraints })
    }

    pub fn images(&self) -> &[Image2D] {
        &self.images
    }

    pub fn constraints(&self) -> &[f64] {
        &self.constraints
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }
}

/// Stable content hash of a training set. Image order is part of the
/// identity.
pub fn filter_digest(ts: &TrainingSet) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (img, u) in ts.images.iter().zip(&ts.constraints) {
        hasher.update((img.width() as u64).to_le_bytes());
        hasher.update((img.height() as u64).to_le_bytes());
        for &v in img.data() {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(u.to_le_bytes());
    }
    hasher.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    OtMach,
    Minace,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::OtMach => "ot_mach",
            FilterKind::Minace => "minace",
        })
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ot_mach" => Ok(FilterKind::OtMach),
            "minace" => Ok(FilterKind::Minace),
            other => Err(Error::Parameter(format!("unknown filter kind {other:?}"))),
        }
    }
}

impl FilterKind {
    pub fn as_u8(self) -> u8 {
        match self {
            FilterKind::OtMach => 0,
            FilterKind::Minace => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(FilterKind::OtMach),
            1 => Ok(FilterKind::Minace),
            k => Err(Error::Format(format!("unknown filter kind {k}"))),
        }
    }
}

/// Synthesis parameters; unused entries stay at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub noise_c: f64,
}

/// Frequency-domain filter H plus synthesis metadata.
#[derive(Debug, Clone)]
pub struct CorrelationFilter {
    pub kind: FilterKind,
    pub h: Spectrum2D,
    pub params: FilterParams,
    pub training_digest: [u8; 32],
}

impl CorrelationFilter {
    pub fn width(&self) -> usize {
        self.h.width
    }

    pub fn height(&self) -> usize {
        self.h.height
    }

    /// Correlate a scene against this filter.
    pub fn correlate(&self, scene: &Image2D) -> Result<ResponseMap> {
        cross_correlate(scene, &self.h)
    }
}
