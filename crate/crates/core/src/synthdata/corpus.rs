use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_resolution, object_class, render_scene, Family};
use crate::error::{Error, Result};
use crate::exec;
use crate::response::CropMode;

/// One class to render: `count` images per resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub family: Family,
    pub class_id: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub family: Family,
    pub class_id: u32,
    pub resolution: usize,
    pub index: usize,
    pub rotation_deg: f64,
    pub sha256: String,
}

/// Recipe plus, after generation, the full file inventory. Regenerating
/// from the same manifest reproduces every byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<ClassSpec>,
    pub resolutions: Vec<usize>,
    /// rotations drawn uniformly from [0, rotation_max_deg)
    pub rotation_max_deg: f64,
    pub seed: u64,
    pub crop_mode: CropMode,
    #[serde(default)]
    pub filter_refs: Vec<String>,
    #[serde(default)]
    pub files: Vec<FileEntry>,
}

impl DatasetManifest {
    /// Vehicle corpus sized for the end-to-end run: class 0 is the true
    /// object with twice the false-class count, classes 1..=3 false.
    pub fn default_vehicles(seed: u64) -> Self {
        let spec = |class_id, count| ClassSpec { family: Family::VehicleShapes, class_id, count };
        Self {
            classes: vec![spec(0, 180), spec(1, 90), spec(2, 90), spec(3, 90)],
            resolutions: vec![256, 128, 64, 32],
            rotation_max_deg: 20.0,
            seed,
            crop_mode: CropMode::Center,
            filter_refs: vec![],
            files: vec![],
        }
    }

    /// Smaller face corpus used only for cross-domain evaluation.
    pub fn default_faces(seed: u64) -> Self {
        let spec = |class_id, count| ClassSpec { family: Family::FaceBlobs, class_id, count };
        Self {
            classes: vec![spec(0, 40), spec(1, 20), spec(2, 20), spec(3, 20)],
            resolutions: vec![128, 64, 32],
            rotation_max_deg: 30.0,
            seed,
            crop_mode: CropMode::Center,
            filter_refs: vec![],
            files: vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Manifest("no classes listed".into()));
        }
        if self.resolutions.is_empty() {
            return Err(Error::Manifest("no resolutions listed".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if c.count == 0 {
                return Err(Error::Manifest(format!(
                    "class {}/{} has zero count",
                    c.family, c.class_id
                )));
            }
            if c.class_id >= c.family.class_count() {
                return Err(Error::Manifest(format!(
                    "{} has no class {}",
                    c.family, c.class_id
                )));
            }
            if !seen.insert((c.family, c.class_id)) {
                return Err(Error::Manifest(format!(
                    "duplicate class {}/{}",
                    c.family, c.class_id
                )));
            }
        }
        for &r in &self.resolutions {
            check_resolution(r).map_err(|e| Error::Manifest(e.to_string()))?;
        }
        if !(self.rotation_max_deg > 0.0 && self.rotation_max_deg <= 360.0) {
            return Err(Error::Manifest("rotation_max_deg must be in (0, 360]".into()));
        }
        Ok(())
    }

    pub fn total_images(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum::<usize>() * self.resolutions.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Confirm every listed file exists under `root` and hash-matches.
    pub fn verify_files(&self, root: &Path) -> Result<()> {
        for f in &self.files {
            let bytes = std::fs::read(root.join(&f.path)).map_err(|e| {
                Error::Manifest(format!("missing file {}: {e}", f.path))
            })?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Manifest(format!("hash mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Render the whole corpus under `root` and return the finalized
/// manifest (also written to `root/manifest.json`). Each image draws its
/// randomness from a dedicated stream of the manifest seed, so parallel
/// and sequential generation agree byte for byte.
pub fn generate_corpus(manifest: &DatasetManifest, root: &Path) -> Result<DatasetManifest> {
    manifest.validate()?;
    struct Job {
        family: Family,
        class_id: u32,
        resolution: usize,
        index: usize,
    }
    let mut jobs = Vec::with_capacity(manifest.total_images());
    for c in &manifest.classes {
        for &resolution in &manifest.resolutions {
            for index in 0..c.count {
                jobs.push(Job { family: c.family, class_id: c.class_id, resolution, index });
            }
        }
    }
    let rendered: Vec<Result<(Vec<u8>, FileEntry)>> = exec::map_indices(jobs.len(), |g| {
        let job = &jobs[g];
        let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
        rng.set_stream(g as u64 + 1);
        let rotation_deg = rng.gen::<f64>() * manifest.rotation_max_deg;
        let background_seed: u64 = rng.gen();
        let cls = object_class(job.family, job.class_id)?;
        let img = render_scene(&cls, job.resolution, rotation_deg, background_seed)?;
        let bytes = img.pgm_bytes();
        let entry = FileEntry {
            path: format!(
                "data/{}/{}/{}/{:04}.pgm",
                job.family, job.class_id, job.resolution, job.index
            ),
            family: job.family,
            class_id: job.class_id,
            resolution: job.resolution,
            index: job.index,
            rotation_deg,
            sha256: sha256_hex(&bytes),
        };
        Ok((bytes, entry))
    });
    let mut out = manifest.clone();
    out.files.clear();
    for r in rendered {
        let (bytes, entry) = r?;
        let path = root.join(&entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &bytes)?;
        out.files.push(entry);
    }
    out.write_json(&root.join("manifest.json"))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_manifest(seed: u64) -> DatasetManifest {
        DatasetManifest {
            classes: vec![
                ClassSpec { family: Family::VehicleShapes, class_id: 0, count: 10 },
                ClassSpec { family: Family::VehicleShapes, class_id: 1, count: 10 },
            ],
            resolutions: vec![32, 64],
            rotation_max_deg: 45.0,
            seed,
            crop_mode: CropMode::Center,
            filter_refs: vec![],
            files: vec![],
        }
    }

    #[test]
    fn image_count_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&tiny_manifest(1), dir.path()).unwrap();
        assert_eq!(m.files.len(), 40);
        assert_eq!(m.total_images(), 40);
        m.verify_files(dir.path()).unwrap();
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate_corpus(&tiny_manifest(7), dir_a.path()).unwrap();
        let b = generate_corpus(&tiny_manifest(7), dir_b.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_changes_hashes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate_corpus(&tiny_manifest(1), dir_a.path()).unwrap();
        let b = generate_corpus(&tiny_manifest(2), dir_b.path()).unwrap();
        let changed = a
            .files
            .iter()
            .zip(&b.files)
            .filter(|(x, y)| x.sha256 != y.sha256)
            .count();
        assert!(changed > a.files.len() / 2, "only {changed} files changed");
    }

    #[test]
    fn duplicate_class_rejected() {
        let mut m = tiny_manifest(1);
        m.classes.push(m.classes[0]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate_corpus(&m, dir.path()),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn zero_count_rejected() {
        let mut m = tiny_manifest(1);
        m.classes[0].count = 0;
        assert!(matches!(m.validate(), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&tiny_manifest(3), dir.path()).unwrap();
        let back = DatasetManifest::read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn verify_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&tiny_manifest(4), dir.path()).unwrap();
        let victim = dir.path().join(&m.files[0].path);
        let mut bytes = std::fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&victim, bytes).unwrap();
        assert!(matches!(m.verify_files(dir.path()), Err(Error::Manifest(_))));
    }
}
