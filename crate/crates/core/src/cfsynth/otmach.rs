use num_complex::Complex64;

use super::{filter_digest, CorrelationFilter, FilterKind, FilterParams, TrainingSet};
use crate::error::{Error, Result};
use crate::imagefft::{fft2, Spectrum2D};

const DENOM_FLOOR: f64 = 1e-12;

/// Optimal-tradeoff MACH synthesis.
///
/// Per frequency: H(u) = m(u) / (α·C(u) + β·D(u) + γ·S(u)) with
/// m the mean training spectrum, D the mean power spectrum,
/// S the spectral variance around m, and C ≡ 1 (white noise).
pub fn synthesize_otmach(
    ts: &TrainingSet,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<CorrelationFilter> {
    if alpha < 0.0 || beta < 0.0 || gamma < 0.0 {
        return Err(Error::Parameter("OT MACH weights must be non-negative".into()));
    }
    if alpha == 0.0 && beta == 0.0 && gamma == 0.0 {
        return Err(Error::Parameter("OT MACH weights must not all be zero".into()));
    }
    let (w, h) = (ts.width(), ts.height());
    let spectra: Vec<Spectrum2D> =
        ts.images().iter().map(fft2).collect::<Result<_>>()?;
    let n = spectra.len() as f64;
    let bins = w * h;
    let mut mean = vec![Complex64::new(0.0, 0.0); bins];
    let mut power = vec![0.0f64; bins];
    for s in &spectra {
        for (i, v) in s.data.iter().enumerate() {
            mean[i] += v;
            power[i] += v.norm_sqr();
        }
    }
    for i in 0..bins {
        mean[i] /= n;
        power[i] /= n;
    }
    let mut variance = vec![0.0f64; bins];
    for s in &spectra {
        for (i, v) in s.data.iter().enumerate() {
            variance[i] += (v - mean[i]).norm_sqr();
        }
    }
    for v in &mut variance {
        *v /= n;
    }
    let denom: Vec<f64> = (0..bins)
        .map(|i| alpha + beta * power[i] + gamma * variance[i])
        .collect();
    if denom.iter().all(|&d| d < DENOM_FLOOR) {
        return Err(Error::DegenerateDenominator(
            "OT MACH denominator vanishes at every frequency".into(),
        ));
    }
    let data: Vec<Complex64> = (0..bins)
        .map(|i| mean[i] / denom[i].max(DENOM_FLOOR))
        .collect();
    Ok(CorrelationFilter {
        kind: FilterKind::OtMach,
        h: Spectrum2D::new(w, h, data)?,
        params: FilterParams { alpha, beta, gamma, noise_c: 0.0 },
        training_digest: filter_digest(ts),
    })
}

/// Peak of the whitening spectrum β·D(u) + γ·S(u) over all frequencies.
/// Scaling α by this value gives the white-noise term the same
/// spectrum-relative meaning at every image size, mirroring the MINACE
/// envelope floor; a fixed absolute α is negligible at large sizes and
/// dominant at small ones.
pub fn otmach_whitening_peak(ts: &TrainingSet, beta: f64, gamma: f64) -> Result<f64> {
    if beta < 0.0 || gamma < 0.0 {
        return Err(Error::Parameter("OT MACH weights must be non-negative".into()));
    }
    let spectra: Vec<Spectrum2D> =
        ts.images().iter().map(fft2).collect::<Result<_>>()?;
    let n = spectra.len() as f64;
    let bins = ts.width() * ts.height();
    let mut mean = vec![Complex64::new(0.0, 0.0); bins];
    let mut power = vec![0.0f64; bins];
    for s in &spectra {
        for (i, v) in s.data.iter().enumerate() {
            mean[i] += v;
            power[i] += v.norm_sqr();
        }
    }
    let mut peak = 0.0f64;
    for i in 0..bins {
        mean[i] /= n;
        power[i] /= n;
    }
    let mut variance = vec![0.0f64; bins];
    for s in &spectra {
        for (i, v) in s.data.iter().enumerate() {
            variance[i] += (v - mean[i]).norm_sqr();
        }
    }
    for i in 0..bins {
        peak = peak.max(beta * power[i] + gamma * variance[i] / n);
    }
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagefft::Image2D;
    use crate::response::pce;

    fn img(seed: u64, n: usize) -> Image2D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image2D::new(n, n, (0..n * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn alpha_only_single_image_is_matched_filter() {
        let x = img(1, 8);
        let ts = TrainingSet::from_images(vec![x.clone()]).unwrap();
        let f = synthesize_otmach(&ts, 1.0, 0.0, 0.0).unwrap();
        let spec = fft2(&x).unwrap();
        for (a, b) in f.h.data.iter().zip(&spec.data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn beta_only_single_image_is_inverse_filter_with_delta_response() {
        let x = img(2, 16);
        let ts = TrainingSet::from_images(vec![x.clone()]).unwrap();
        let f = synthesize_otmach(&ts, 0.0, 1.0, 0.0).unwrap();
        let r = f.correlate(&x).unwrap();
        assert!((r.get(0, 0) - 1.0).abs() < 1e-9);
        // delta-like: essentially all energy at the origin
        assert!(pce(&r).unwrap() > 0.99);
    }

    #[test]
    fn gamma_only_identical_images_degenerate() {
        let x = img(3, 8);
        let ts = TrainingSet::from_images(vec![x.clone(), x]).unwrap();
        let err = synthesize_otmach(&ts, 0.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator(_)));
    }

    #[test]
    fn all_zero_weights_rejected() {
        let ts = TrainingSet::from_images(vec![img(4, 8)]).unwrap();
        assert!(matches!(
            synthesize_otmach(&ts, 0.0, 0.0, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn whitening_peak_single_image_is_beta_times_max_power() {
        let x = img(9, 8);
        let ts = TrainingSet::from_images(vec![x.clone()]).unwrap();
        let expected = fft2(&x)
            .unwrap()
            .data
            .iter()
            .map(|v| v.norm_sqr())
            .fold(0.0f64, f64::max);
        let peak = otmach_whitening_peak(&ts, 2.0, 5.0).unwrap();
        // one image: the variance term vanishes
        assert!((peak - 2.0 * expected).abs() / expected < 1e-12);
    }

    #[test]
    fn deterministic() {
        let ts = TrainingSet::from_images(vec![img(5, 8), img(6, 8)]).unwrap();
        let a = synthesize_otmach(&ts, 0.01, 1.0, 0.1).unwrap();
        let b = synthesize_otmach(&ts, 0.01, 1.0, 0.1).unwrap();
        assert_eq!(a.h.data, b.h.data);
    }

    #[test]
    fn scaling_training_images_keeps_matched_filter_argmax() {
        let x = img(7, 8);
        let scene = img(8, 8);
        let ts = TrainingSet::from_images(vec![x.clone()]).unwrap();
        let f1 = synthesize_otmach(&ts, 1.0, 0.0, 0.0).unwrap();
        let mut scaled = x;
        for v in scaled.data_mut() {
            *v *= 3.0;
        }
        let ts2 = TrainingSet::from_images(vec![scaled]).unwrap();
        let f2 = synthesize_otmach(&ts2, 1.0, 0.0, 0.0).unwrap();
        let argmax = |r: &crate::imagefft::ResponseMap| {
            r.data
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let r1 = f1.correlate(&scene).unwrap();
        let r2 = f2.correlate(&scene).unwrap();
        assert_eq!(argmax(&r1), argmax(&r2));
    }
}
