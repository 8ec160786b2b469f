use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{
    summarize, CnnStats, EvalReport, Method, MethodReport, ResolutionAccuracy, RoleCount, SetError,
};
use super::{baseline_classify, Role};
use crate::cfsynth::{
    default_minace_noise, otmach_whitening_peak, synthesize_minace, synthesize_otmach,
    CorrelationFilter, FilterKind,
    TrainingSet,
};
use crate::classifier::{build_model, predict_batch, train, LabeledPatch, TrainConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::imagefft::Image2D;
use crate::response::{metric_scores, preprocess_calibrated, MetricScores, ResponsePatch};
use crate::synthdata::{generate_corpus, DatasetManifest, Family, FileEntry};
use crate::tensornet::Model;

pub const SET_DEFINITION: &str = "(object class, resolution)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest: DatasetManifest,
    /// other-family corpus for the cross-domain evaluation
    pub faces: Option<DatasetManifest>,
    pub true_class: u32,
    pub held_out_class: u32,
    /// true-class images per resolution reserved for filter synthesis
    pub filter_train_count: usize,
    /// white-noise floor, relative to the peak of the whitening spectrum
    /// β·D + γ·S so it has the same meaning at every resolution
    pub otmach_alpha: f64,
    pub otmach_beta: f64,
    pub otmach_gamma: f64,
    /// absolute noise floor; None picks the spectrum-scaled default
    pub minace_noise: Option<f64>,
    pub base_width: usize,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: DatasetManifest::default_vehicles(11),
            faces: Some(DatasetManifest::default_faces(12)),
            true_class: 0,
            held_out_class: 3,
            filter_train_count: 12,
            otmach_alpha: 1e-3,
            otmach_beta: 1.0,
            otmach_gamma: 1.0,
            minace_noise: None,
            base_width: crate::classifier::DEFAULT_BASE_WIDTH,
            train: TrainConfig { seed: 21, ..TrainConfig::default() },
        }
    }
}

impl ExperimentConfig {
    /// Minutes-scale configuration for tests: tiny corpus, narrow model,
    /// short training.
    pub fn smoke(seed: u64) -> Self {
        use crate::response::CropMode;
        use crate::synthdata::ClassSpec;
        let spec = |class_id, count| ClassSpec { family: Family::VehicleShapes, class_id, count };
        let fspec = |class_id, count| ClassSpec { family: Family::FaceBlobs, class_id, count };
        Self {
            manifest: DatasetManifest {
                classes: vec![spec(0, 18), spec(1, 8), spec(2, 8), spec(3, 8)],
                resolutions: vec![64, 32],
                rotation_max_deg: 45.0,
                seed,
                crop_mode: CropMode::Center,
                filter_refs: vec![],
                files: vec![],
            },
            faces: Some(DatasetManifest {
                classes: vec![fspec(0, 10), fspec(1, 6), fspec(2, 6), fspec(3, 6)],
                resolutions: vec![32],
                rotation_max_deg: 30.0,
                seed: seed.wrapping_add(1),
                crop_mode: CropMode::Center,
                filter_refs: vec![],
                files: vec![],
            }),
            filter_train_count: 2,
            base_width: 6,
            train: TrainConfig {
                epochs: 3,
                batch_size: 8,
                seed: seed.wrapping_add(2),
                val_fraction: 0.0,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.validate().map_err(|e| e.in_stage("config"))?;
        self.train.validate()?;
        if self.true_class == self.held_out_class {
            return Err(Error::Config("true and held-out class must differ".into()));
        }
        if self.filter_train_count == 0 {
            return Err(Error::Config("filter_train_count must be positive".into()));
        }
        let count_of = |id: u32| {
            self.manifest
                .classes
                .iter()
                .find(|c| c.class_id == id)
                .map(|c| c.count)
        };
        let true_count = count_of(self.true_class)
            .ok_or_else(|| Error::Config("manifest lacks the true class".into()))?;
        if true_count < self.filter_train_count + 4 {
            return Err(Error::Config(
                "true class too small for filter training plus train/test splits".into(),
            ));
        }
        let false_classes = self
            .manifest
            .classes
            .iter()
            .filter(|c| c.class_id != self.true_class)
            .count();
        if false_classes == 0 {
            return Err(Error::Config("evaluation needs at least one false class".into()));
        }
        if self.otmach_alpha < 0.0 || self.otmach_beta < 0.0 || self.otmach_gamma < 0.0 {
            return Err(Error::Config("OT MACH weights must be non-negative".into()));
        }
        if self.base_width == 0 {
            return Err(Error::Config("base_width must be positive".into()));
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(e.to_string()))
    }
}

struct SampleRecord<'a> {
    entry: &'a FileEntry,
    role: Role,
    label: bool,
}

/// Deterministic role partition: within each (class, resolution) group,
/// in manifest order, the true class yields `filter_train_count` filter
/// images then a 2:1 CNN train/test split; false classes split 2:1; the
/// held-out class is test-only.
fn assign_roles<'a>(
    manifest: &'a DatasetManifest,
    true_class: u32,
    held_out_class: Option<u32>,
    filter_train_count: usize,
) -> Result<Vec<SampleRecord<'a>>> {
    let mut groups: HashMap<(u32, usize), Vec<usize>> = HashMap::new();
    for (i, f) in manifest.files.iter().enumerate() {
        groups.entry((f.class_id, f.resolution)).or_default().push(i);
    }
    let mut roles = vec![Role::CnnTest; manifest.files.len()];
    for ((class_id, _res), members) in &groups {
        if *class_id == true_class {
            if members.len() < filter_train_count + 4 {
                return Err(Error::Input(format!(
                    "true-class group of {} cannot spare {filter_train_count} filter images",
                    members.len()
                )));
            }
            let rest = members.len() - filter_train_count;
            for (pos, &i) in members.iter().enumerate() {
                roles[i] = if pos < filter_train_count {
                    Role::FilterTrain
                } else if pos - filter_train_count < rest * 2 / 3 {
                    Role::CnnTrain
                } else {
                    Role::CnnTest
                };
            }
        } else if Some(*class_id) == held_out_class {
            // test-only
        } else {
            for (pos, &i) in members.iter().enumerate() {
                roles[i] =
                    if pos < members.len() * 2 / 3 { Role::CnnTrain } else { Role::CnnTest };
            }
        }
    }
    Ok(manifest
        .files
        .iter()
        .zip(roles)
        .map(|(entry, role)| SampleRecord { entry, role, label: entry.class_id == true_class })
        .collect())
}

fn role_counts(samples: &[SampleRecord<'_>]) -> Vec<RoleCount> {
    let mut counts: Vec<RoleCount> = Vec::new();
    for s in samples {
        match counts.iter_mut().find(|c| {
            c.class_id == s.entry.class_id && c.resolution == s.entry.resolution && c.role == s.role
        }) {
            Some(c) => c.count += 1,
            None => counts.push(RoleCount {
                family: s.entry.family,
                class_id: s.entry.class_id,
                resolution: s.entry.resolution,
                role: s.role,
                count: 1,
            }),
        }
    }
    counts
}

/// Both filter types per resolution, synthesized from true-class
/// filter-train images; CFLT artifacts land in `out/filters`.
fn train_filters(
    cfg: &ExperimentConfig,
    samples: &[SampleRecord<'_>],
    resolutions: &[usize],
    root: &Path,
    out: &Path,
) -> Result<HashMap<(FilterKind, usize), CorrelationFilter>> {
    let dir = out.join("filters");
    std::fs::create_dir_all(&dir)?;
    let mut filters = HashMap::new();
    for &res in resolutions {
        let images: Vec<Image2D> = samples
            .iter()
            .filter(|s| s.role == Role::FilterTrain && s.entry.resolution == res)
            .map(|s| Image2D::read_pgm(&root.join(&s.entry.path)))
            .collect::<Result<_>>()?;
        let ts = TrainingSet::from_images(images)?;
        // otmach_alpha is spectrum-relative: the white-noise floor scales
        // with the peak of the whitening spectrum so it means the same
        // thing at every resolution (as the MINACE envelope floor does)
        let scale = otmach_whitening_peak(&ts, cfg.otmach_beta, cfg.otmach_gamma)?;
        let alpha = if scale > 0.0 { cfg.otmach_alpha * scale } else { cfg.otmach_alpha };
        let otmach = synthesize_otmach(&ts, alpha, cfg.otmach_beta, cfg.otmach_gamma)?;
        let noise = match cfg.minace_noise {
            Some(v) => v,
            None => default_minace_noise(&ts)?,
        };
        let minace = synthesize_minace(&ts, noise)?;
        let ot_path = dir.join(format!("ot_mach_{res}.cflt"));
        let mi_path = dir.join(format!("minace_{res}.cflt"));
        otmach.write_file(&ot_path)?;
        minace.write_file(&mi_path)?;
        // reload: CFLT quantizes the spectrum to f32, and later stages
        // must see the same filter whether they re-run in isolation or not
        filters.insert((FilterKind::OtMach, res), CorrelationFilter::read_file(&ot_path)?);
        filters.insert((FilterKind::Minace, res), CorrelationFilter::read_file(&mi_path)?);
    }
    Ok(filters)
}

struct Correlated {
    /// index into `samples`
    sample: usize,
    otmach: (MetricScores, ResponsePatch),
    minace: (MetricScores, ResponsePatch),
}

/// Mean response peak over the filter-training images, per filter. This
/// is the normalization reference for patches: it is fixed before any
/// evaluation sample is seen and travels with the filter semantics, so a
/// stage re-run reproduces it from the corpus and the CFLT files alone.
fn reference_peaks(
    samples: &[SampleRecord<'_>],
    filters: &HashMap<(FilterKind, usize), CorrelationFilter>,
    root: &Path,
) -> Result<HashMap<(FilterKind, usize), f64>> {
    let mut refs = HashMap::new();
    for (&(kind, res), filter) in filters {
        let peaks: Vec<f64> = samples
            .iter()
            .filter(|s| s.role == Role::FilterTrain && s.entry.resolution == res)
            .map(|s| -> Result<f64> {
                let img = Image2D::read_pgm(&root.join(&s.entry.path))?;
                Ok(crate::response::peak_height(&filter.correlate(&img)?))
            })
            .collect::<Result<_>>()?;
        if peaks.is_empty() {
            return Err(Error::Input(format!("no filter-training images at {res}")));
        }
        refs.insert((kind, res), peaks.iter().sum::<f64>() / peaks.len() as f64);
    }
    Ok(refs)
}

fn correlate_all(
    samples: &[SampleRecord<'_>],
    filters: &HashMap<(FilterKind, usize), CorrelationFilter>,
    crop_mode: crate::response::CropMode,
    root: &Path,
) -> Result<Vec<Correlated>> {
    let refs = reference_peaks(samples, filters, root)?;
    let jobs: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].role != Role::FilterTrain)
        .collect();
    let results: Vec<Result<Correlated>> = exec::map_batch(&jobs, |&i| {
        let s = &samples[i];
        let img = Image2D::read_pgm(&root.join(&s.entry.path))?;
        let run = |kind: FilterKind| -> Result<(MetricScores, ResponsePatch)> {
            let filter = filters
                .get(&(kind, s.entry.resolution))
                .ok_or_else(|| Error::Input(format!("no {kind} filter at {}", s.entry.resolution)))?;
            let r = filter.correlate(&img)?;
            let reference = refs[&(kind, s.entry.resolution)];
            Ok((metric_scores(&r)?, preprocess_calibrated(&r, crop_mode, reference)?))
        };
        Ok(Correlated { sample: i, otmach: run(FilterKind::OtMach)?, minace: run(FilterKind::Minace)? })
    });
    let mut out_vec = Vec::with_capacity(jobs.len());
    for r in results {
        out_vec.push(r?);
    }
    Ok(out_vec)
}

fn patch_path(out: &Path, kind: FilterKind, e: &FileEntry) -> std::path::PathBuf {
    out.join("patches")
        .join(kind.to_string())
        .join(e.class_id.to_string())
        .join(e.resolution.to_string())
        .join(format!("{:04}.pt32", e.index))
}

fn write_patches(
    samples: &[SampleRecord<'_>],
    correlated: &[Correlated],
    out: &Path,
) -> Result<()> {
    for c in correlated {
        let e = samples[c.sample].entry;
        for (kind, patch) in
            [(FilterKind::OtMach, &c.otmach.1), (FilterKind::Minace, &c.minace.1)]
        {
            let path = patch_path(out, kind, e);
            std::fs::create_dir_all(path.parent().unwrap())?;
            patch.write_file(&path)?;
        }
    }
    Ok(())
}

/// Chunked inference so activation caches stay small.
fn cnn_scores(model: &mut Model<f32>, patches: &[ResponsePatch]) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(64) {
        scores.extend(predict_batch(model, chunk)?);
    }
    Ok(scores)
}

fn set_id(family: Family, class_id: u32, resolution: usize) -> String {
    format!("{family}/c{class_id}/r{resolution}")
}

/// Per-set error rows from parallel (sample, correct?) pairs, ordered by
/// (class, resolution) first appearance.
fn set_rows(samples: &[SampleRecord<'_>], evals: &[(usize, bool)]) -> Vec<SetError> {
    let mut rows: Vec<SetError> = Vec::new();
    for &(i, correct) in evals {
        let e = samples[i].entry;
        let id = set_id(e.family, e.class_id, e.resolution);
        let row = match rows.iter_mut().find(|r| r.set_id == id) {
            Some(r) => r,
            None => {
                rows.push(SetError {
                    set_id: id,
                    family: e.family,
                    class_id: e.class_id,
                    resolution: e.resolution,
                    test_count: 0,
                    wrong: 0,
                    error_pct: 0.0,
                });
                rows.last_mut().unwrap()
            }
        };
        row.test_count += 1;
        if !correct {
            row.wrong += 1;
        }
    }
    for r in &mut rows {
        r.error_pct = 100.0 * r.wrong as f64 / r.test_count as f64;
    }
    rows
}

fn accuracy(evals: &[(usize, bool)]) -> f64 {
    if evals.is_empty() {
        return 0.0;
    }
    evals.iter().filter(|&&(_, c)| c).count() as f64 / evals.len() as f64
}

/// Baseline method rows for one filter kind: thresholds calibrated per
/// resolution on CNN-train samples, evaluated on CNN-test samples.
fn baseline_method(
    samples: &[SampleRecord<'_>],
    correlated: &[Correlated],
    kind: FilterKind,
    method: Method,
    resolutions: &[usize],
) -> Result<MethodReport> {
    let score_of = |c: &Correlated| {
        let m = match kind {
            FilterKind::OtMach => &c.otmach.0,
            FilterKind::Minace => &c.minace.0,
        };
        match method {
            Method::PeakHeight => m.peak_height,
            Method::Pce => m.pce,
            Method::Cnn => unreachable!("cnn is not a threshold baseline"),
        }
    };
    let mut evals: Vec<(usize, bool)> = Vec::new();
    for &res in resolutions {
        let mut cal = Vec::new();
        let mut eval = Vec::new();
        for c in correlated {
            let s = &samples[c.sample];
            if s.entry.resolution != res {
                continue;
            }
            match s.role {
                Role::CnnTrain => cal.push((score_of(c), s.label)),
                Role::CnnTest => eval.push((c.sample, score_of(c), s.label)),
                Role::FilterTrain => {}
            }
        }
        let pairs: Vec<(f64, bool)> = eval.iter().map(|&(_, s, l)| (s, l)).collect();
        let (_fit, predictions, _err) = baseline_classify(&cal, &pairs)?;
        for (&(i, _, label), pred) in eval.iter().zip(predictions) {
            evals.push((i, pred == label));
        }
    }
    let sets = set_rows(samples, &evals);
    let summary = summarize(&sets);
    Ok(MethodReport { filter: kind, method, sets, summary })
}

fn cnn_method(
    samples: &[SampleRecord<'_>],
    evals: &[(usize, bool)],
    kind: FilterKind,
) -> MethodReport {
    let sets = set_rows(samples, evals);
    let summary = summarize(&sets);
    MethodReport { filter: kind, method: Method::Cnn, sets, summary }
}

/// The full experiment: corpus, filters, responses, CNN, report. All
/// artifacts (corpus, CFLT filters, PT32 patches, checkpoint, reports)
/// land under `out_dir`; the report is also returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    cfg.write_json(&out_dir.join("config.json"))?;
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    let manifest =
        generate_corpus(&cfg.manifest, out_dir).map_err(stage("gen-data"))?;
    let samples = assign_roles(
        &manifest,
        cfg.true_class,
        Some(cfg.held_out_class),
        cfg.filter_train_count,
    )
    .map_err(stage("gen-data"))?;
    write_lineage(&samples, &out_dir.join("lineage.json"))?;

    let filters = train_filters(cfg, &samples, &manifest.resolutions, out_dir, out_dir)
        .map_err(stage("train-filter"))?;
    let correlated = correlate_all(&samples, &filters, manifest.crop_mode, out_dir)
        .map_err(stage("correlate"))?;
    write_metrics(&samples, &correlated, &out_dir.join("metrics.json"))?;
    write_patches(&samples, &correlated, out_dir).map_err(stage("prep"))?;

    let dataset: Vec<LabeledPatch> = correlated
        .iter()
        .filter(|c| samples[c.sample].role == Role::CnnTrain)
        .map(|c| LabeledPatch { patch: c.otmach.1.clone(), label: samples[c.sample].label })
        .collect();
    let mut model =
        build_model::<f32>(cfg.base_width, cfg.train.seed).map_err(stage("train-cnn"))?;
    let train_report = train(&mut model, &dataset, &cfg.train).map_err(stage("train-cnn"))?;
    model.save_checkpoint(&out_dir.join("cnn.ckpt")).map_err(stage("train-cnn"))?;
    {
        let json = serde_json::to_string_pretty(&train_report)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(out_dir.join("train_report.json"), json)?;
    }

    // CNN evaluation on both filter types
    let test: Vec<&Correlated> = correlated
        .iter()
        .filter(|c| samples[c.sample].role == Role::CnnTest)
        .collect();
    let eval_cnn = |model: &mut Model<f32>, pick: &dyn Fn(&Correlated) -> &ResponsePatch| {
        let patches: Vec<ResponsePatch> = test.iter().map(|c| pick(c).clone()).collect();
        cnn_scores(model, &patches).map(|scores| {
            test.iter()
                .zip(scores)
                .map(|(c, s)| (c.sample, (s >= 0.5) == samples[c.sample].label))
                .collect::<Vec<(usize, bool)>>()
        })
    };
    let otmach_evals = eval_cnn(&mut model, &|c| &c.otmach.1).map_err(stage("eval"))?;
    let minace_evals = eval_cnn(&mut model, &|c| &c.minace.1).map_err(stage("eval"))?;

    let per_resolution_accuracy = manifest
        .resolutions
        .iter()
        .map(|&res| ResolutionAccuracy {
            resolution: res,
            accuracy: accuracy(
                &otmach_evals
                    .iter()
                    .filter(|&&(i, _)| samples[i].entry.resolution == res)
                    .copied()
                    .collect::<Vec<_>>(),
            ),
        })
        .collect();
    let held_out: Vec<(usize, bool)> = otmach_evals
        .iter()
        .filter(|&&(i, _)| samples[i].entry.class_id == cfg.held_out_class)
        .copied()
        .collect();

    let mut methods = Vec::new();
    for kind in [FilterKind::OtMach, FilterKind::Minace] {
        for method in [Method::PeakHeight, Method::Pce] {
            methods.push(
                baseline_method(&samples, &correlated, kind, method, &manifest.resolutions)
                    .map_err(stage("eval"))?,
            );
        }
        let evals = match kind {
            FilterKind::OtMach => &otmach_evals,
            FilterKind::Minace => &minace_evals,
        };
        methods.push(cnn_method(&samples, evals, kind));
    }

    let report = EvalReport {
        set_definition: SET_DEFINITION.to_string(),
        methods,
        cnn: Some(CnnStats {
            param_count: model.param_count(),
            test_accuracy: accuracy(&otmach_evals),
            per_resolution_accuracy,
            held_out_class_accuracy: accuracy(&held_out),
            cross_filter_test_accuracy: accuracy(&minace_evals),
            train: train_report,
        }),
        role_counts: role_counts(&samples),
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

/// Rebuild the architecture and load the trained weights saved by
/// [`run_experiment`].
pub fn load_trained_model(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Model<f32>> {
    let mut model = build_model::<f32>(cfg.base_width, cfg.train.seed)?;
    model.load_checkpoint(&out_dir.join("cnn.ckpt"))?;
    Ok(model)
}

/// Apply a frozen vehicle-trained model to the face corpus: new filters
/// from face class 0, new responses, recalibrated baselines, no CNN
/// retraining. Artifacts land under `out_dir/faces`.
pub fn cross_domain_eval(
    cfg: &ExperimentConfig,
    model: &mut Model<f32>,
    out_dir: &Path,
) -> Result<EvalReport> {
    let faces = cfg
        .faces
        .as_ref()
        .ok_or_else(|| Error::Config("no cross-domain manifest configured".into()))?;
    if faces.classes.iter().any(|c| c.family != Family::FaceBlobs) {
        return Err(Error::Config("cross-domain corpus must be face_blobs".into()));
    }
    let out = out_dir.join("faces");
    std::fs::create_dir_all(&out)?;
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    let manifest = generate_corpus(faces, &out).map_err(stage("gen-data"))?;
    // no held-out class here: every false class splits into the baseline
    // calibration and evaluation halves
    let samples = assign_roles(&manifest, cfg.true_class, None, cfg.filter_train_count)
        .map_err(stage("gen-data"))?;
    write_lineage(&samples, &out.join("lineage.json"))?;
    let filters = train_filters(cfg, &samples, &manifest.resolutions, &out, &out)
        .map_err(stage("train-filter"))?;
    let correlated = correlate_all(&samples, &filters, manifest.crop_mode, &out)
        .map_err(stage("correlate"))?;
    write_metrics(&samples, &correlated, &out.join("metrics.json"))?;
    write_patches(&samples, &correlated, &out).map_err(stage("prep"))?;

    let test: Vec<&Correlated> = correlated
        .iter()
        .filter(|c| samples[c.sample].role == Role::CnnTest)
        .collect();
    let mut methods = Vec::new();
    for kind in [FilterKind::OtMach, FilterKind::Minace] {
        for method in [Method::PeakHeight, Method::Pce] {
            methods.push(
                baseline_method(&samples, &correlated, kind, method, &manifest.resolutions)
                    .map_err(stage("cross-eval"))?,
            );
        }
        let patches: Vec<ResponsePatch> = test
            .iter()
            .map(|c| match kind {
                FilterKind::OtMach => c.otmach.1.clone(),
                FilterKind::Minace => c.minace.1.clone(),
            })
            .collect();
        let scores = cnn_scores(model, &patches).map_err(stage("cross-eval"))?;
        let evals: Vec<(usize, bool)> = test
            .iter()
            .zip(scores)
            .map(|(c, s)| (c.sample, (s >= 0.5) == samples[c.sample].label))
            .collect();
        methods.push(cnn_method(&samples, &evals, kind));
    }
    let report = EvalReport {
        set_definition: SET_DEFINITION.to_string(),
        methods,
        cnn: None,
        role_counts: role_counts(&samples),
    };
    write_report(&report, &out)?;
    Ok(report)
}

fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    report.write_json(&out.join("report.json"))?;
    std::fs::write(out.join("report.csv"), super::render_csv(report))?;
    std::fs::write(out.join("report.txt"), super::render_text(report))?;
    Ok(())
}

#[derive(Serialize)]
struct MetricRow<'a> {
    path: &'a str,
    filter: FilterKind,
    peak_height: f64,
    pce: f64,
}

/// Classical metric scores for every correlated sample, both filters.
fn write_metrics(
    samples: &[SampleRecord<'_>],
    correlated: &[Correlated],
    path: &Path,
) -> Result<()> {
    let mut rows = Vec::with_capacity(2 * correlated.len());
    for c in correlated {
        let e = samples[c.sample].entry;
        for (kind, m) in [(FilterKind::OtMach, &c.otmach.0), (FilterKind::Minace, &c.minace.0)] {
            rows.push(MetricRow {
                path: &e.path,
                filter: kind,
                peak_height: m.peak_height,
                pce: m.pce,
            });
        }
    }
    let json = serde_json::to_string_pretty(&rows).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Corpus plus role lineage only; the other stage entry points read
/// these artifacts back, so any stage can re-run in isolation.
pub fn stage_gen_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    cfg.write_json(&out_dir.join("config.json"))?;
    let stage = |e: Error| e.in_stage("gen-data");
    let manifest = generate_corpus(&cfg.manifest, out_dir).map_err(stage)?;
    let samples = assign_roles(
        &manifest,
        cfg.true_class,
        Some(cfg.held_out_class),
        cfg.filter_train_count,
    )
    .map_err(stage)?;
    write_lineage(&samples, &out_dir.join("lineage.json"))?;
    Ok(())
}

fn read_manifest(out_dir: &Path, stage_name: &str) -> Result<DatasetManifest> {
    DatasetManifest::read_json(&out_dir.join("manifest.json"))
        .map_err(|e| e.in_stage(stage_name))
}

/// Filter synthesis from the on-disk corpus; CFLT files land in
/// `out_dir/filters`.
pub fn stage_train_filter(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let manifest = read_manifest(out_dir, "train-filter")?;
    let samples = assign_roles(
        &manifest,
        cfg.true_class,
        Some(cfg.held_out_class),
        cfg.filter_train_count,
    )
    .map_err(|e| e.in_stage("train-filter"))?;
    train_filters(cfg, &samples, &manifest.resolutions, out_dir, out_dir)
        .map_err(|e| e.in_stage("train-filter"))?;
    Ok(())
}

fn load_filters(
    out_dir: &Path,
    resolutions: &[usize],
) -> Result<HashMap<(FilterKind, usize), CorrelationFilter>> {
    let mut filters = HashMap::new();
    for &res in resolutions {
        for kind in [FilterKind::OtMach, FilterKind::Minace] {
            let path = out_dir.join("filters").join(format!("{kind}_{res}.cflt"));
            filters.insert((kind, res), CorrelationFilter::read_file(&path)?);
        }
    }
    Ok(filters)
}

fn staged_correlate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    crop_override: Option<crate::response::CropMode>,
    stage_name: &str,
) -> Result<()> {
    let manifest = read_manifest(out_dir, stage_name)?;
    let run = || -> Result<()> {
        let samples = assign_roles(
            &manifest,
            cfg.true_class,
            Some(cfg.held_out_class),
            cfg.filter_train_count,
        )?;
        let filters = load_filters(out_dir, &manifest.resolutions)?;
        let crop = crop_override.unwrap_or(manifest.crop_mode);
        let correlated = correlate_all(&samples, &filters, crop, out_dir)?;
        if stage_name == "correlate" {
            write_metrics(&samples, &correlated, &out_dir.join("metrics.json"))?;
        } else {
            write_patches(&samples, &correlated, out_dir)?;
        }
        Ok(())
    };
    run().map_err(|e| e.in_stage(stage_name))
}

/// Classical metrics from on-disk corpus and filters: `metrics.json`.
pub fn stage_correlate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    staged_correlate(cfg, out_dir, None, "correlate")
}

/// Cropped, normalized 32x32 CNN inputs: `patches/**.pt32`.
pub fn stage_prep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    crop_override: Option<crate::response::CropMode>,
) -> Result<()> {
    staged_correlate(cfg, out_dir, crop_override, "prep")
}

/// Train the CNN on the on-disk training patches; writes `cnn.ckpt` and
/// `train_report.json`.
pub fn stage_train_cnn(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<crate::classifier::TrainReport> {
    let manifest = read_manifest(out_dir, "train-cnn")?;
    let run = || -> Result<crate::classifier::TrainReport> {
        let samples = assign_roles(
            &manifest,
            cfg.true_class,
            Some(cfg.held_out_class),
            cfg.filter_train_count,
        )?;
        let mut dataset = Vec::new();
        for s in &samples {
            if s.role != Role::CnnTrain {
                continue;
            }
            let path = patch_path(out_dir, FilterKind::OtMach, s.entry);
            dataset.push(LabeledPatch { patch: ResponsePatch::read_file(&path)?, label: s.label });
        }
        let mut model = build_model::<f32>(cfg.base_width, cfg.train.seed)?;
        let report = train(&mut model, &dataset, &cfg.train)?;
        model.save_checkpoint(&out_dir.join("cnn.ckpt"))?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(out_dir.join("train_report.json"), json)?;
        Ok(report)
    };
    run().map_err(|e| e.in_stage("train-cnn"))
}

#[derive(Serialize)]
struct LineageRow<'a> {
    path: &'a str,
    family: Family,
    class_id: u32,
    resolution: usize,
    role: Role,
    label: bool,
}

fn write_lineage(samples: &[SampleRecord<'_>], path: &Path) -> Result<()> {
    let rows: Vec<LineageRow<'_>> = samples
        .iter()
        .map(|s| LineageRow {
            path: &s.entry.path,
            family: s.entry.family,
            class_id: s.entry.class_id,
            resolution: s.entry.resolution,
            role: s.role,
            label: s.label,
        })
        .collect();
    let json = serde_json::to_string_pretty(&rows).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_partition_every_sample() {
        let cfg = ExperimentConfig::smoke(31);
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&cfg.manifest, dir.path()).unwrap();
        let samples = assign_roles(&manifest, 0, Some(3), cfg.filter_train_count).unwrap();
        assert_eq!(samples.len(), manifest.files.len());
        // held-out class never trains
        for s in &samples {
            if s.entry.class_id == 3 {
                assert_eq!(s.role, Role::CnnTest);
            }
        }
        // filter training draws from the true class only
        for s in &samples {
            if s.role == Role::FilterTrain {
                assert_eq!(s.entry.class_id, 0);
            }
        }
        // per true-class group: exactly filter_train_count filter images
        for &res in &manifest.resolutions {
            let n = samples
                .iter()
                .filter(|s| {
                    s.role == Role::FilterTrain && s.entry.resolution == res
                })
                .count();
            assert_eq!(n, cfg.filter_train_count);
        }
    }

    #[test]
    fn config_validation_catches_misconfigurations() {
        let mut cfg = ExperimentConfig::smoke(1);
        cfg.held_out_class = cfg.true_class;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::smoke(1);
        cfg.manifest.classes.retain(|c| c.class_id != 0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::smoke(1);
        cfg.manifest.classes.retain(|c| c.class_id == 0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn smoke_experiment_end_to_end() {
        let cfg = ExperimentConfig::smoke(33);
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();

        // 6 method reports: 2 filters x 3 methods
        assert_eq!(report.methods.len(), 6);
        for m in &report.methods {
            let s = &m.summary;
            assert_eq!(s.near_zero_sets + s.high_error_sets + s.other_sets, m.sets.len());
            for row in &m.sets {
                assert!((0.0..=100.0).contains(&row.error_pct));
            }
        }
        let cnn = report.cnn.as_ref().unwrap();
        assert!(cnn.test_accuracy > 0.5, "cnn accuracy {}", cnn.test_accuracy);

        // artifacts on disk
        for f in [
            "config.json",
            "manifest.json",
            "lineage.json",
            "cnn.ckpt",
            "train_report.json",
            "report.json",
            "report.csv",
            "report.txt",
            "filters/ot_mach_64.cflt",
            "filters/minace_32.cflt",
        ] {
            assert!(dir.path().join(f).exists(), "missing {f}");
        }

        // report JSON round trip
        let back = EvalReport::read_json(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);

        // cross-domain pass with the frozen model
        let mut model = load_trained_model(&cfg, dir.path()).unwrap();
        let cross = cross_domain_eval(&cfg, &mut model, dir.path()).unwrap();
        assert_eq!(cross.methods.len(), 6);
        assert!(cross.cnn.is_none());
        assert!(dir.path().join("faces/report.csv").exists());
    }

    #[test]
    fn same_seed_reports_identical() {
        let cfg = ExperimentConfig::smoke(35);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_experiment(&cfg, dir_a.path()).unwrap();
        let b = run_experiment(&cfg, dir_b.path()).unwrap();
        assert_eq!(a, b);
        let bytes = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        for f in ["report.json", "report.csv", "cnn.ckpt"] {
            assert_eq!(bytes(dir_a.path(), f), bytes(dir_b.path(), f), "{f} differs");
        }
    }

    #[test]
    fn staged_run_matches_monolithic_artifacts() {
        let cfg = ExperimentConfig::smoke(41);
        let dir_a = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir_a.path()).unwrap();

        let dir_b = tempfile::tempdir().unwrap();
        stage_gen_data(&cfg, dir_b.path()).unwrap();
        stage_train_filter(&cfg, dir_b.path()).unwrap();
        stage_correlate(&cfg, dir_b.path()).unwrap();
        stage_prep(&cfg, dir_b.path(), None).unwrap();
        stage_train_cnn(&cfg, dir_b.path()).unwrap();

        let bytes = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        for f in [
            "manifest.json",
            "lineage.json",
            "metrics.json",
            "filters/ot_mach_32.cflt",
            "filters/minace_64.cflt",
            "patches/ot_mach/0/32/0002.pt32",
            "train_report.json",
            "cnn.ckpt",
        ] {
            assert_eq!(bytes(dir_a.path(), f), bytes(dir_b.path(), f), "{f} differs");
        }
    }

    #[test]
    fn true_class_only_corpus_fails() {
        let mut cfg = ExperimentConfig::smoke(37);
        cfg.manifest.classes.retain(|c| c.class_id == 0);
        let dir = tempfile::tempdir().unwrap();
        assert!(run_experiment(&cfg, dir.path()).is_err());
    }

    #[test]
    fn cross_domain_family_mismatch_rejected() {
        let mut cfg = ExperimentConfig::smoke(39);
        let vehicles = cfg.manifest.clone();
        cfg.faces = Some(vehicles);
        let mut model = build_model::<f32>(cfg.base_width, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            cross_domain_eval(&cfg, &mut model, dir.path()),
            Err(Error::Config(_))
        ));
    }
}
