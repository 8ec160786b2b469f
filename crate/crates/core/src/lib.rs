//! Invariant correlation filters, FFT-domain correlation, and a slim
//! residual CNN that classifies the shape of correlation responses.
//!
//! The crate is organized around the processing chain:
//! scene → [`imagefft::cross_correlate`] with a [`cfsynth`] filter →
//! [`response`] crop/normalize into 32×32 patches → [`classifier`] CNN or
//! classical peak/PCE metrics → [`pipeline`] evaluation reports.
//! [`synthdata`] generates the deterministic synthetic corpora the
//! benchmarks run on.

pub mod cfsynth;
pub mod classifier;
pub mod error;
pub mod exec;
pub mod imagefft;
pub mod pipeline;
pub mod response;
pub mod synthdata;
pub mod tensornet;

pub use error::{Error, Result};
