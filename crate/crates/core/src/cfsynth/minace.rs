use num_complex::Complex64;

use super::linalg::solve_with_condition;
use super::{filter_digest, CorrelationFilter, FilterKind, FilterParams, TrainingSet};
use crate::error::{Error, Result};
use crate::imagefft::{fft2, Spectrum2D};

const MAX_CONDITION: f64 = 1e12;

/// MINACE synthesis: minimize H†TH subject to X†H = d·u, where
/// T(u) = max(max_i |X_i(u)|², noise_c), X holds the training spectra as
/// columns and d = W·H makes the spatial origin response equal u_i under
/// the crate's inverse-normalized FFT. Solution H = T⁻¹X·a with
/// (X†T⁻¹X)·a = d·u.
pub fn synthesize_minace(ts: &TrainingSet, noise_c: f64) -> Result<CorrelationFilter> {
    if noise_c < 0.0 {
        return Err(Error::Parameter("noise_c must be non-negative".into()));
    }
    let (w, h) = (ts.width(), ts.height());
    let bins = w * h;
    let spectra: Vec<Spectrum2D> =
        ts.images().iter().map(fft2).collect::<Result<_>>()?;
    let n = spectra.len();

    let mut envelope = vec![0.0f64; bins];
    for s in &spectra {
        for (i, v) in s.data.iter().enumerate() {
            envelope[i] = envelope[i].max(v.norm_sqr());
        }
    }
    for e in &mut envelope {
        *e = e.max(noise_c);
        if *e == 0.0 {
            return Err(Error::DegenerateTraining(
                "spectral envelope vanishes with noise_c = 0".into(),
            ));
        }
    }

    // Gram = X† T⁻¹ X (Hermitian, n×n)
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..bins {
                acc += spectra[i].data[u].conj() * spectra[j].data[u] / envelope[u];
            }
            gram[i * n + j] = acc;
        }
    }
    let d = (w * h) as f64;
    let rhs: Vec<Complex64> =
        ts.constraints().iter().map(|&u| Complex64::new(d * u, 0.0)).collect();
    let out = solve_with_condition(&gram, &rhs)?;
    if !out.condition.is_finite() || out.condition > MAX_CONDITION {
        return Err(Error::DegenerateTraining(format!(
            "Gram matrix condition estimate {:.3e} exceeds {MAX_CONDITION:.0e}",
            out.condition
        )));
    }

    let mut data = vec![Complex64::new(0.0, 0.0); bins];
    for u in 0..bins {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, s) in spectra.iter().enumerate() {
            acc += s.data[u] * out.solution[i];
        }
        data[u] = acc / envelope[u];
    }
    Ok(CorrelationFilter {
        kind: FilterKind::Minace,
        h: Spectrum2D::new(w, h, data)?,
        params: FilterParams { alpha: 0.0, beta: 0.0, gamma: 0.0, noise_c },
        training_digest: filter_digest(ts),
    })
}

/// Default envelope-relative noise floor: 1e-3 × max_u T(u).
pub fn default_minace_noise(ts: &TrainingSet) -> Result<f64> {
    let mut peak = 0.0f64;
    for img in ts.images() {
        let s = fft2(img)?;
        for v in &s.data {
            peak = peak.max(v.norm_sqr());
        }
    }
    Ok(1e-3 * peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagefft::Image2D;

    fn img(seed: u64, n: usize) -> Image2D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image2D::new(n, n, (0..n * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn origin_responses(f: &CorrelationFilter, ts: &TrainingSet) -> Vec<f64> {
        ts.images().iter().map(|x| f.correlate(x).unwrap().get(0, 0)).collect()
    }

    #[test]
    fn single_image_constraint_satisfied() {
        let ts = TrainingSet::from_images(vec![img(1, 32)]).unwrap();
        let f = synthesize_minace(&ts, 0.0).unwrap();
        let r = origin_responses(&f, &ts);
        assert!((r[0] - 1.0).abs() < 1e-4, "origin response {}", r[0]);
    }

    #[test]
    fn three_images_all_constraints_satisfied() {
        let ts =
            TrainingSet::from_images(vec![img(2, 32), img(3, 32), img(4, 32)]).unwrap();
        let noise = default_minace_noise(&ts).unwrap();
        let f = synthesize_minace(&ts, noise).unwrap();
        for r in origin_responses(&f, &ts) {
            assert!((r - 1.0).abs() < 1e-4, "origin response {r}");
        }
    }

    #[test]
    fn custom_constraints_are_honored() {
        let ts = TrainingSet::with_constraints(
            vec![img(5, 16), img(6, 16)],
            vec![1.0, 0.25],
        )
        .unwrap();
        let f = synthesize_minace(&ts, 0.0).unwrap();
        let r = origin_responses(&f, &ts);
        assert!((r[0] - 1.0).abs() < 1e-4);
        assert!((r[1] - 0.25).abs() < 1e-4);
    }

    #[test]
    fn duplicated_training_image_degenerate() {
        let x = img(7, 16);
        let ts = TrainingSet::from_images(vec![x.clone(), x]).unwrap();
        let err = synthesize_minace(&ts, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateTraining(_)));
    }

    #[test]
    fn deterministic() {
        let ts = TrainingSet::from_images(vec![img(8, 16), img(9, 16)]).unwrap();
        let a = synthesize_minace(&ts, 1e-3).unwrap();
        let b = synthesize_minace(&ts, 1e-3).unwrap();
        assert_eq!(a.h.data, b.h.data);
    }
}
