use serde::{Deserialize, Serialize};

use super::Role;
use crate::cfsynth::FilterKind;
use crate::classifier::TrainReport;
use crate::error::{Error, Result};
use crate::synthdata::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PeakHeight,
    Pce,
    Cnn,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::PeakHeight => "peak_height",
            Method::Pce => "pce",
            Method::Cnn => "cnn",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak_height" => Ok(Method::PeakHeight),
            "pce" => Ok(Method::Pce),
            "cnn" => Ok(Method::Cnn),
            other => Err(Error::Format(format!("unknown method {other:?}"))),
        }
    }
}

/// Error rate of one method over one image set (a (class, resolution)
/// group of test samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetError {
    pub set_id: String,
    pub family: Family,
    pub class_id: u32,
    pub resolution: usize,
    pub test_count: usize,
    pub wrong: usize,
    pub error_pct: f64,
}

pub const NEAR_ZERO_PCT: f64 = 0.001;
pub const HIGH_ERROR_PCT: f64 = 25.0;

/// The three buckets partition the sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub near_zero_sets: usize,
    pub high_error_sets: usize,
    pub other_sets: usize,
    pub mean_error_other_pct: f64,
    pub overall_avg_error_pct: f64,
}

pub fn summarize(sets: &[SetError]) -> BucketSummary {
    let mut near_zero = 0;
    let mut high = 0;
    let mut other_sum = 0.0;
    let mut other = 0;
    let mut total = 0.0;
    for s in sets {
        total += s.error_pct;
        if s.error_pct < NEAR_ZERO_PCT {
            near_zero += 1;
        } else if s.error_pct > HIGH_ERROR_PCT {
            high += 1;
        } else {
            other += 1;
            other_sum += s.error_pct;
        }
    }
    BucketSummary {
        near_zero_sets: near_zero,
        high_error_sets: high,
        other_sets: other,
        mean_error_other_pct: if other > 0 { other_sum / other as f64 } else { 0.0 },
        overall_avg_error_pct: if sets.is_empty() { 0.0 } else { total / sets.len() as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub filter: FilterKind,
    pub method: Method,
    pub sets: Vec<SetError>,
    pub summary: BucketSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionAccuracy {
    pub resolution: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnStats {
    pub param_count: usize,
    /// accuracy over the primary-filter test patches
    pub test_accuracy: f64,
    pub per_resolution_accuracy: Vec<ResolutionAccuracy>,
    pub held_out_class_accuracy: f64,
    /// same model, same scenes, the other filter's responses
    pub cross_filter_test_accuracy: f64,
    pub train: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleCount {
    pub family: Family,
    pub class_id: u32,
    pub resolution: usize,
    pub role: Role,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub set_definition: String,
    pub methods: Vec<MethodReport>,
    /// absent for cross-domain reports, which reuse a frozen model
    pub cnn: Option<CnnStats>,
    pub role_counts: Vec<RoleCount>,
}

impl EvalReport {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

pub const CSV_HEADER: &str =
    "filter,method,set_id,family,class_id,resolution,test_count,wrong,error_pct";

/// Lossless CSV of the per-set rows; summaries are recomputable.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in &report.methods {
        for s in &m.sets {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.filter,
                m.method,
                s.set_id,
                s.family,
                s.class_id,
                s.resolution,
                s.test_count,
                s.wrong,
                s.error_pct
            ));
        }
    }
    out
}

/// Parse rows produced by [`render_csv`]; floats round-trip exactly.
pub fn parse_csv(csv: &str) -> Result<Vec<(FilterKind, Method, SetError)>> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::Format("bad CSV header".into())),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!("bad CSV row {line:?}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Format(format!("bad number {s:?}")))
        };
        rows.push((
            f[0].parse()?,
            f[1].parse()?,
            SetError {
                set_id: f[2].to_string(),
                family: f[3].parse()?,
                class_id: num(f[4])? as u32,
                resolution: num(f[5])? as usize,
                test_count: num(f[6])? as usize,
                wrong: num(f[7])? as usize,
                error_pct: num(f[8])?,
            },
        ));
    }
    Ok(rows)
}

/// Aligned text table of the bucket summaries, one row per
/// (filter, method).
pub fn render_text(report: &EvalReport) -> String {
    let mut rows = vec![[
        "filter".to_string(),
        "method".to_string(),
        format!("sets<{NEAR_ZERO_PCT}%"),
        format!("sets>{HIGH_ERROR_PCT}%"),
        "mean(other)%".to_string(),
        "overall%".to_string(),
    ]];
    for m in &report.methods {
        rows.push([
            m.filter.to_string(),
            m.method.to_string(),
            m.summary.near_zero_sets.to_string(),
            m.summary.high_error_sets.to_string(),
            format!("{:.3}", m.summary.mean_error_other_pct),
            format!("{:.3}", m.summary.overall_avg_error_pct),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    out.push_str(&format!("set definition: {}\n", report.set_definition));
    for r in &rows {
        for (c, cell) in r.iter().enumerate() {
            out.push_str(&format!("{cell:>width$}  ", width = widths[c]));
        }
        out.pop();
        out.pop();
        out.push('\n');
    }
    if let Some(cnn) = &report.cnn {
        out.push_str(&format!(
            "\ncnn: {} params, test accuracy {:.4}, held-out class {:.4}, cross-filter {:.4}\n",
            cnn.param_count,
            cnn.test_accuracy,
            cnn.held_out_class_accuracy,
            cnn.cross_filter_test_accuracy
        ));
        for ra in &cnn.per_resolution_accuracy {
            out.push_str(&format!("  {:>4}: accuracy {:.4}\n", ra.resolution, ra.accuracy));
        }
    }
    out
}
