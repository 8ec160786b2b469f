//! Deterministic synthetic scene generator: parametric object classes
//! rendered over value-noise backgrounds at several resolutions.
//!
//! Two families cover the two experiment roles: `VehicleShapes` are
//! angular polygon silhouettes, `FaceBlobs` are smooth Gaussian-mixture
//! blobs used by the cross-domain evaluation.

mod corpus;

pub use corpus::{generate_corpus, ClassSpec, DatasetManifest, FileEntry};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagefft::Image2D;

pub const VALID_RESOLUTIONS: [usize; 4] = [32, 64, 128, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    VehicleShapes,
    FaceBlobs,
}

impl Family {
    pub fn dir_name(self) -> &'static str {
        match self {
            Family::VehicleShapes => "vehicle_shapes",
            Family::FaceBlobs => "face_blobs",
        }
    }

    pub fn class_count(self) -> u32 {
        4
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vehicle_shapes" => Ok(Family::VehicleShapes),
            "face_blobs" => Ok(Family::FaceBlobs),
            other => Err(Error::Parameter(format!("unknown family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One elliptical Gaussian lobe in unit coordinates; negative amplitude
/// darkens (eyes, mouth).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub cy: f64,
    pub cx: f64,
    pub sy: f64,
    pub sx: f64,
    pub amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Closed outline in unit coordinates (y down, origin at the image
    /// center), filled with the even-odd rule.
    Polygon(Vec<(f64, f64)>),
    Blobs(Vec<Blob>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectClass {
    pub family: Family,
    pub class_id: u32,
    pub geometry: Geometry,
    pub albedo: f64,
}

/// The built-in classes. For each family, class 0 plays the true-object
/// role and classes 1..=3 are false objects; class 3 is the held-out
/// false class in the default experiment.
pub fn object_class(family: Family, class_id: u32) -> Result<ObjectClass> {
    if class_id >= family.class_count() {
        return Err(Error::Parameter(format!(
            "{family} has classes 0..{}, got {class_id}",
            family.class_count()
        )));
    }
    let (geometry, albedo) = match family {
        Family::VehicleShapes => vehicle_geometry(class_id),
        Family::FaceBlobs => face_geometry(class_id),
    };
    Ok(ObjectClass { family, class_id, geometry, albedo })
}

fn vehicle_geometry(class_id: u32) -> (Geometry, f64) {
    // silhouettes traced clockwise, y pointing down; false classes are
    // scaled below the true class so it carries the largest pixel mass
    // (keeps the matched-filter sanity invariant)
    let (scale, verts): (f64, Vec<(f64, f64)>) = match class_id {
        // wide hull + turret + long right barrel
        0 => (
            1.0,
            vec![
                (-0.14, -0.26),
                (0.10, -0.26),
                (0.10, -0.21),
                (0.42, -0.21),
                (0.42, -0.15),
                (0.10, -0.15),
                (0.10, -0.11),
                (0.38, -0.11),
                (0.32, 0.14),
                (-0.34, 0.14),
                (-0.40, -0.11),
                (-0.14, -0.11),
            ],
        ),
        // left-facing barrel, boxier turret, slab hull
        1 => (
            0.82,
            vec![
                (-0.40, -0.14),
                (-0.14, -0.14),
                (-0.14, -0.26),
                (0.14, -0.26),
                (0.14, -0.06),
                (0.38, -0.06),
                (0.32, 0.14),
                (-0.32, 0.14),
                (-0.40, -0.06),
            ],
        ),
        // twin towers over a flat deck
        2 => (
            0.85,
            vec![
                (-0.36, -0.22),
                (-0.06, -0.22),
                (-0.06, -0.08),
                (0.06, -0.08),
                (0.06, -0.22),
                (0.36, -0.22),
                (0.36, 0.10),
                (-0.36, 0.10),
            ],
        ),
        // low wedge
        _ => (
            0.90,
            vec![
                (-0.38, 0.00),
                (0.00, -0.22),
                (0.38, 0.00),
                (0.30, 0.14),
                (-0.30, 0.14),
            ],
        ),
    };
    let verts = verts.into_iter().map(|(x, y)| (x * scale, y * scale)).collect();
    (Geometry::Polygon(verts), 0.88)
}

fn face_geometry(class_id: u32) -> (Geometry, f64) {
    let b = |cy, cx, sy, sx, amp| Blob { cy, cx, sy, sx, amp };
    let blobs = match class_id {
        // oval face, close-set eyes, small mouth; largest lobe of the
        // family so the matched-filter sanity invariant holds
        0 => vec![
            b(0.00, 0.00, 0.23, 0.17, 1.0),
            b(-0.08, -0.07, 0.025, 0.035, -0.8),
            b(-0.08, 0.07, 0.025, 0.035, -0.8),
            b(0.11, 0.00, 0.02, 0.06, -0.6),
        ],
        // twin-lobed face (split cheeks), wide-set eyes; the split main
        // mass modulates the spectrum away from the single-oval class 0,
        // and like the false vehicle classes the positive mass is scaled
        // down so the matched-filter sanity invariant holds with margin
        1 => vec![
            b(0.00, -0.11, 0.20, 0.075, 0.65),
            b(0.00, 0.11, 0.20, 0.075, 0.65),
            b(-0.10, -0.11, 0.02, 0.03, -0.8),
            b(-0.10, 0.11, 0.02, 0.03, -0.8),
            b(0.14, 0.00, 0.015, 0.05, -0.6),
        ],
        // wide flat face with heavy brow; aspect orthogonal to class 0
        2 => vec![
            b(0.00, 0.00, 0.115, 0.24, 0.80),
            b(-0.08, 0.00, 0.018, 0.15, -0.7),
            b(-0.03, -0.09, 0.02, 0.03, -0.8),
            b(-0.03, 0.09, 0.02, 0.03, -0.8),
            b(0.08, 0.00, 0.02, 0.06, -0.5),
        ],
        // small compact face, big open mouth
        _ => vec![
            b(-0.03, 0.00, 0.14, 0.12, 0.85),
            b(-0.09, -0.06, 0.02, 0.025, -0.8),
            b(-0.09, 0.06, 0.02, 0.025, -0.8),
            b(0.08, 0.00, 0.05, 0.05, -0.9),
        ],
    };
    (Geometry::Blobs(blobs), 0.92)
}

fn polygon_area(verts: &[(f64, f64)]) -> f64 {
    let n = verts.len();
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = verts[i];
        let (x1, y1) = verts[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    s.abs() / 2.0
}

fn validate_geometry(geometry: &Geometry) -> Result<()> {
    match geometry {
        Geometry::Polygon(v) => {
            if v.len() < 3 || polygon_area(v) < 1e-6 {
                return Err(Error::Geometry("polygon has no area".into()));
            }
        }
        Geometry::Blobs(blobs) => {
            let bright = blobs
                .iter()
                .any(|b| b.amp > 0.0 && b.sy > 1e-6 && b.sx > 1e-6);
            if !bright {
                return Err(Error::Geometry("blob mixture has no positive mass".into()));
            }
        }
    }
    Ok(())
}

/// Even-odd point-in-polygon.
fn inside_polygon(verts: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = verts.len();
    let mut inside = false;
    for i in 0..n {
        let (x0, y0) = verts[i];
        let (x1, y1) = verts[(i + 1) % n];
        if (y0 > y) != (y1 > y) {
            let xi = x0 + (y - y0) / (y1 - y0) * (x1 - x0);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn blob_intensity(blobs: &[Blob], x: f64, y: f64) -> f64 {
    let mut a = 0.0;
    for b in blobs {
        let dy = (y - b.cy) / b.sy;
        let dx = (x - b.cx) / b.sx;
        a += b.amp * (-0.5 * (dy * dy + dx * dx)).exp();
    }
    a.clamp(0.0, 1.0)
}

const SUBSAMPLES: [(f64, f64); 4] = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];

/// Object opacity mask at the given resolution and rotation, values in
/// [0,1], 2x2 supersampled. Background-free; `render_scene` composites
/// this over noise.
pub fn object_coverage(cls: &ObjectClass, resolution: usize, rotation_deg: f64) -> Result<Image2D> {
    check_resolution(resolution)?;
    validate_geometry(&cls.geometry)?;
    let rot = normalize_rotation(rotation_deg)?;
    let (sin, cos) = rot.to_radians().sin_cos();
    let inv = 1.0 / resolution as f64;
    let mut data = vec![0.0f64; resolution * resolution];
    for py in 0..resolution {
        for px in 0..resolution {
            let mut acc = 0.0;
            for (oy, ox) in SUBSAMPLES {
                let v = (py as f64 + oy) * inv - 0.5;
                let u = (px as f64 + ox) * inv - 0.5;
                // sample the object frame: rotate the scene point back
                let x = cos * u + sin * v;
                let y = -sin * u + cos * v;
                acc += match &cls.geometry {
                    Geometry::Polygon(verts) => {
                        if inside_polygon(verts, x, y) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Geometry::Blobs(blobs) => blob_intensity(blobs, x, y),
                };
            }
            data[py * resolution + px] = acc / SUBSAMPLES.len() as f64;
        }
    }
    Image2D::new(resolution, resolution, data)
}

/// Seeded value noise in [0,1]: two bilinear octaves on fixed unit-square
/// lattices, so the pattern depends on the seed only, not the resolution.
fn value_noise(resolution: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse: Vec<f64> = (0..9 * 9).map(|_| rng.gen()).collect();
    let fine: Vec<f64> = (0..17 * 17).map(|_| rng.gen()).collect();
    let sample = |lattice: &[f64], cells: usize, u: f64, v: f64| {
        let fy = v * cells as f64;
        let fx = u * cells as f64;
        let y0 = (fy.floor() as usize).min(cells - 1);
        let x0 = (fx.floor() as usize).min(cells - 1);
        let ty = fy - y0 as f64;
        let tx = fx - x0 as f64;
        let side = cells + 1;
        let g = |y: usize, x: usize| lattice[y * side + x];
        g(y0, x0) * (1.0 - ty) * (1.0 - tx)
            + g(y0, x0 + 1) * (1.0 - ty) * tx
            + g(y0 + 1, x0) * ty * (1.0 - tx)
            + g(y0 + 1, x0 + 1) * ty * tx
    };
    let inv = 1.0 / resolution as f64;
    let mut out = vec![0.0; resolution * resolution];
    for py in 0..resolution {
        for px in 0..resolution {
            let v = (py as f64 + 0.5) * inv;
            let u = (px as f64 + 0.5) * inv;
            out[py * resolution + px] =
                (2.0 * sample(&coarse, 8, u, v) + sample(&fine, 16, u, v)) / 3.0;
        }
    }
    out
}

pub const BACKGROUND_CONTRAST: f64 = 0.3;

fn check_resolution(resolution: usize) -> Result<()> {
    if VALID_RESOLUTIONS.contains(&resolution) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "resolution must be one of {VALID_RESOLUTIONS:?}, got {resolution}"
        )))
    }
}

fn normalize_rotation(deg: f64) -> Result<f64> {
    if !deg.is_finite() {
        return Err(Error::Parameter("rotation must be finite".into()));
    }
    Ok(deg.rem_euclid(360.0))
}

/// Render one scene: the rotated object composited over seeded value
/// noise. Pure function of its arguments.
pub fn render_scene(
    cls: &ObjectClass,
    resolution: usize,
    rotation_deg: f64,
    background_seed: u64,
) -> Result<Image2D> {
    let coverage = object_coverage(cls, resolution, rotation_deg)?;
    let noise = value_noise(resolution, background_seed);
    let bg_floor = 0.5 - BACKGROUND_CONTRAST / 2.0;
    let mut data = vec![0.0f64; resolution * resolution];
    for (i, v) in data.iter_mut().enumerate() {
        let bg = bg_floor + BACKGROUND_CONTRAST * noise[i];
        let a = coverage.data()[i];
        *v = (bg * (1.0 - a) + cls.albedo * a).clamp(0.0, 1.0);
    }
    Image2D::new(resolution, resolution, data)
}

/// Fraction of differing mask area between two classes, sampled at 64^2
/// and rotation 0; used to enforce that classes stay distinguishable.
pub fn geometry_distance(a: &ObjectClass, b: &ObjectClass) -> Result<f64> {
    let ma = object_coverage(a, 64, 0.0)?;
    let mb = object_coverage(b, 64, 0.0)?;
    let mut diff = 0.0;
    let mut union = 0.0;
    for (x, y) in ma.data().iter().zip(mb.data()) {
        diff += (x - y).abs();
        union += x.max(*y);
    }
    if union == 0.0 {
        return Err(Error::Geometry("both masks are empty".into()));
    }
    Ok(diff / union)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(family: Family) -> Vec<ObjectClass> {
        (0..family.class_count())
            .map(|id| object_class(family, id).unwrap())
            .collect()
    }

    #[test]
    fn classes_within_family_are_distinct() {
        for family in [Family::VehicleShapes, Family::FaceBlobs] {
            let cs = classes(family);
            for i in 0..cs.len() {
                for j in (i + 1)..cs.len() {
                    let d = geometry_distance(&cs[i], &cs[j]).unwrap();
                    assert!(d > 0.2, "{family} classes {i},{j} too close: {d}");
                }
            }
        }
    }

    #[test]
    fn rotation_is_periodic() {
        let cls = object_class(Family::VehicleShapes, 0).unwrap();
        let a = render_scene(&cls, 64, 0.0, 5).unwrap();
        let b = render_scene(&cls, 64, 360.0, 5).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn render_is_deterministic() {
        let cls = object_class(Family::FaceBlobs, 2).unwrap();
        let a = render_scene(&cls, 64, 123.4, 77).unwrap();
        let b = render_scene(&cls, 64, 123.4, 77).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn output_stays_in_unit_range() {
        for family in [Family::VehicleShapes, Family::FaceBlobs] {
            let cls = object_class(family, 1).unwrap();
            let img = render_scene(&cls, 32, 45.0, 9).unwrap();
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn pixel_mass_scales_with_area() {
        let cls = object_class(Family::VehicleShapes, 0).unwrap();
        let m64: f64 = object_coverage(&cls, 64, 30.0).unwrap().data().iter().sum();
        let m128: f64 = object_coverage(&cls, 128, 30.0).unwrap().data().iter().sum();
        let ratio = m128 / m64;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn background_contrast_is_bounded() {
        // blob-free region check is awkward; render the background alone
        // through a zero-coverage class surrogate: use value noise directly
        let noise = value_noise(128, 3);
        let lo = noise.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = noise.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 0.0 && hi <= 1.0);
        let bg_lo = 0.35 + 0.3 * lo;
        let bg_hi = 0.35 + 0.3 * hi;
        assert!(bg_hi - bg_lo <= BACKGROUND_CONTRAST + 1e-12);
    }

    #[test]
    fn different_seeds_change_background() {
        let cls = object_class(Family::VehicleShapes, 3).unwrap();
        let a = render_scene(&cls, 64, 10.0, 1).unwrap();
        let b = render_scene(&cls, 64, 10.0, 2).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let cls = ObjectClass {
            family: Family::VehicleShapes,
            class_id: 0,
            geometry: Geometry::Polygon(vec![(0.0, 0.0), (0.1, 0.1)]),
            albedo: 0.9,
        };
        assert!(matches!(
            render_scene(&cls, 64, 0.0, 0),
            Err(Error::Geometry(_))
        ));
        let flat = ObjectClass {
            family: Family::FaceBlobs,
            class_id: 0,
            geometry: Geometry::Blobs(vec![]),
            albedo: 0.9,
        };
        assert!(matches!(
            render_scene(&flat, 64, 0.0, 0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn invalid_resolution_rejected() {
        let cls = object_class(Family::VehicleShapes, 0).unwrap();
        assert!(matches!(
            render_scene(&cls, 48, 0.0, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn matched_filter_separates_true_from_false() {
        use crate::cfsynth::{synthesize_otmach, TrainingSet};
        use crate::response::peak_height;

        // matched filter from one true-class render; mean peak over
        // true scenes must beat every false class, in both families
        for family in [Family::VehicleShapes, Family::FaceBlobs] {
            let cs = classes(family);
            let train = render_scene(&cs[0], 64, 0.0, 100).unwrap();
            let ts = TrainingSet::from_images(vec![train]).unwrap();
            let filter = synthesize_otmach(&ts, 1.0, 0.0, 0.0).unwrap();
            let mean_peak = |cls_idx: usize| {
                (0..5)
                    .map(|k| {
                        let scene =
                            render_scene(&cs[cls_idx], 64, (k * 7) as f64, 200 + k as u64)
                                .unwrap();
                        peak_height(&filter.correlate(&scene).unwrap())
                    })
                    .sum::<f64>()
                    / 5.0
            };
            let true_peak = mean_peak(0);
            for false_idx in 1..4 {
                let fp = mean_peak(false_idx);
                assert!(
                    true_peak > fp,
                    "{family} class {false_idx}: true {true_peak} vs false {fp}"
                );
            }
        }
    }
}
