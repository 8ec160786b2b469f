//! 2D discrete Fourier transforms and frequency-domain cross correlation.
//!
//! The transform pair is radix-2 decimation-in-time, implemented in-repo;
//! forward is unnormalized, inverse carries 1/(W·H) so the round trip is
//! the identity. Correlation is circular with no zero padding.

mod correlate;
mod fft;
mod image;

pub use correlate::{cross_correlate, spatial_correlate_oracle};
pub use fft::{fft2, ifft2, Spectrum2D};
pub use image::{Image2D, ResponseMap};
