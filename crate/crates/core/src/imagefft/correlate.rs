use super::fft::{fft2, ifft2, Spectrum2D};
use super::image::{Image2D, ResponseMap};
use crate::error::{Error, Result};

/// Frequency-domain cross correlation: magnitude of ifft2(conj(F) ⊙ H).
///
/// Circular (wrap-around), no zero padding. Under this convention a scene
/// equal to the template circularly shifted by (dy, dx) peaks at
/// ((H - dy) % H, (W - dx) % W); the shift sweep test pins this down.
pub fn cross_correlate(scene: &Image2D, filter_h: &Spectrum2D) -> Result<ResponseMap> {
    if scene.width() != filter_h.width || scene.height() != filter_h.height {
        return Err(Error::Dimension(format!(
            "scene {}x{} vs filter {}x{}",
            scene.width(),
            scene.height(),
            filter_h.width,
            filter_h.height
        )));
    }
    let f = fft2(scene)?;
    let product = Spectrum2D::new(
        f.width,
        f.height,
        f.data.iter().zip(&filter_h.data).map(|(a, b)| a.conj() * b).collect(),
    )?;
    let out = ifft2(&product)?;
    ResponseMap::new(out.width, out.height, out.data.iter().map(|v| v.norm()).collect())
}

/// Direct O(N^4) circular cross correlation matching [`cross_correlate`]'s
/// convention in exact arithmetic; kept as the independent oracle.
///
/// r(s_y, s_x) = | Σ_{y,x} scene(y, x) · template(y + s_y, x + s_x) |
pub fn spatial_correlate_oracle(scene: &Image2D, template: &Image2D) -> Result<ResponseMap> {
    if scene.width() != template.width() || scene.height() != template.height() {
        return Err(Error::Dimension("oracle shape mismatch".into()));
    }
    let (w, h) = (scene.width(), scene.height());
    let mut data = vec![0.0f64; w * h];
    for sy in 0..h {
        for sx in 0..w {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += scene.get(y, x) * template.get((y + sy) % h, (x + sx) % w);
                }
            }
            data[sy * w + sx] = acc.abs();
        }
    }
    ResponseMap::new(w, h, data)
}
