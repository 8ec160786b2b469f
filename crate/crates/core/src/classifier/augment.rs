use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::response::{ResponsePatch, PATCH_SIDE};

/// Augmentation settings: independent flips, rotation by a uniform random
/// angle with bilinear interpolation (zero fill), a gamma jitter
/// v -> v^exp(u) with u uniform in [-gamma_log_max, gamma_log_max],
/// additive Gaussian noise with a uniform random standard deviation, then
/// a clamp to [0,1]. Gamma jitter reshapes the background-to-peak level
/// without moving the extremes; it is off by default because calibrated
/// patches carry their class signal in absolute amplitude, which a gamma
/// draw would scramble.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AugmentConfig {
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub rot_max_deg: f64,
    pub gamma_log_max: f64,
    pub noise_sigma_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            vflip_p: 0.5,
            rot_max_deg: 90.0,
            gamma_log_max: 0.0,
            noise_sigma_max: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn off() -> Self {
        Self {
            hflip_p: 0.0,
            vflip_p: 0.0,
            rot_max_deg: 0.0,
            gamma_log_max: 0.0,
            noise_sigma_max: 0.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = (0.0..=1.0).contains(&self.hflip_p)
            && (0.0..=1.0).contains(&self.vflip_p)
            && (0.0..=180.0).contains(&self.rot_max_deg)
            && self.gamma_log_max >= 0.0
            && self.noise_sigma_max >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config("augmentation settings out of range".into()))
        }
    }
}

fn hflip(data: &mut [f32]) {
    for row in data.chunks_exact_mut(PATCH_SIDE) {
        row.reverse();
    }
}

fn vflip(data: &mut [f32]) {
    for y in 0..PATCH_SIDE / 2 {
        for x in 0..PATCH_SIDE {
            data.swap(y * PATCH_SIDE + x, (PATCH_SIDE - 1 - y) * PATCH_SIDE + x);
        }
    }
}

/// Rotate about the patch center by `deg`; bilinear sampling, out of
/// bounds reads as 0.
pub fn rotate_bilinear(data: &[f32], deg: f64) -> Vec<f32> {
    let c = (PATCH_SIDE as f64 - 1.0) / 2.0;
    let (sin, cos) = deg.to_radians().sin_cos();
    let mut out = vec![0.0f32; PATCH_SIDE * PATCH_SIDE];
    for y in 0..PATCH_SIDE {
        for x in 0..PATCH_SIDE {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            // inverse map: rotate the output coordinate back by -deg
            let sy = c + cos * dy + sin * dx;
            let sx = c - sin * dy + cos * dx;
            let y0 = sy.floor();
            let x0 = sx.floor();
            let fy = sy - y0;
            let fx = sx - x0;
            let mut acc = 0.0f64;
            for (oy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                for (ox, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                    let iy = y0 as i64 + oy;
                    let ix = x0 as i64 + ox;
                    if (0..PATCH_SIDE as i64).contains(&iy)
                        && (0..PATCH_SIDE as i64).contains(&ix)
                    {
                        acc += wy * wx
                            * data[iy as usize * PATCH_SIDE + ix as usize] as f64;
                    }
                }
            }
            out[y * PATCH_SIDE + x] = acc as f32;
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Apply one random augmentation draw to a patch. Draw order is fixed
/// (hflip, vflip, angle, gamma, sigma, noise) so a shared RNG stream
/// stays reproducible.
pub fn augment(patch: &ResponsePatch, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> ResponsePatch {
    let mut data = patch.data.clone();
    if rng.gen::<f64>() < cfg.hflip_p {
        hflip(&mut data);
    }
    if rng.gen::<f64>() < cfg.vflip_p {
        vflip(&mut data);
    }
    let angle = rng.gen::<f64>() * cfg.rot_max_deg;
    if angle != 0.0 {
        data = rotate_bilinear(&data, angle);
    }
    let gamma = ((rng.gen::<f64>() * 2.0 - 1.0) * cfg.gamma_log_max).exp();
    if gamma != 1.0 {
        for v in &mut data {
            // patches live in [0,1]; powf keeps them there
            *v = (*v as f64).max(0.0).powf(gamma) as f32;
        }
    }
    let sigma = rng.gen::<f64>() * cfg.noise_sigma_max;
    if sigma > 0.0 {
        for v in &mut data {
            *v = (*v as f64 + sigma * gaussian(rng)) as f32;
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    ResponsePatch { data, source_resolution: patch.source_resolution, crop_mode: patch.crop_mode }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::CropMode;
    use rand::SeedableRng;

    fn patch(data: Vec<f32>) -> ResponsePatch {
        ResponsePatch { data, source_resolution: 64, crop_mode: CropMode::Center }
    }

    fn random_patch(seed: u64) -> ResponsePatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        patch((0..1024).map(|_| rng.gen::<f32>()).collect())
    }

    #[test]
    fn all_off_is_identity() {
        let p = random_patch(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = augment(&p, &AugmentConfig::off(), &mut rng);
        assert_eq!(p.data, q.data);
    }

    #[test]
    fn hflip_is_involution() {
        let p = random_patch(3);
        let cfg = AugmentConfig { hflip_p: 1.0, ..AugmentConfig::off() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = augment(&augment(&p, &cfg, &mut rng), &cfg, &mut rng);
        assert_eq!(p.data, q.data);
    }

    #[test]
    fn vflip_is_involution() {
        let p = random_patch(5);
        let cfg = AugmentConfig { vflip_p: 1.0, ..AugmentConfig::off() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = augment(&augment(&p, &cfg, &mut rng), &cfg, &mut rng);
        assert_eq!(p.data, q.data);
    }

    #[test]
    fn rotation_90_moves_bright_pixel_to_rotated_coordinate() {
        let mut data = vec![0.0f32; 1024];
        data[8 * 32 + 16] = 1.0;
        let rotated = rotate_bilinear(&data, 90.0);
        // coordinate-transform oracle: offset (-7.5, 0.5) from the center
        // (15.5, 15.5) rotates to (-0.5, -7.5), i.e. the pixel lands at
        // (15.0, 8.0) exactly
        assert!((rotated[15 * 32 + 8] - 1.0).abs() < 1e-4);
        let total: f32 = rotated.iter().sum();
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gamma_fixes_endpoints_and_preserves_order() {
        let p = patch((0..1024).map(|i| i as f32 / 1023.0).collect());
        let cfg = AugmentConfig { gamma_log_max: 1.2, ..AugmentConfig::off() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let q = augment(&p, &cfg, &mut rng);
            assert_eq!(q.data[0], 0.0);
            assert!((q.data[1023] - 1.0).abs() < 1e-6);
            for w in q.data.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn output_stays_in_unit_range() {
        let p = random_patch(7);
        let cfg = AugmentConfig { noise_sigma_max: 0.5, ..AugmentConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = augment(&p, &cfg, &mut rng);
            assert_eq!(q.data.len(), 1024);
            assert!(q.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
