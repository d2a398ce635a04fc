//! Per-file and aggregate scores, serialised as JSON or CSV.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, FileMetrics};
use super::pipeline::{ModelIdentity, Pipeline};
use super::rtf::RtfResult;
use crate::degrade::{load_pairs, CorpusManifest};
use crate::dsp::{read_wav, Waveform};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REFERENCE_LABEL: &str = "published, not reproduced";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub files: usize,
    pub si_sdr_db: Option<f64>,
    pub lsd_db: Option<f64>,
    pub mrstft: Option<f64>,
}

impl Aggregate {
    pub fn of(files: &[FileMetrics]) -> Self {
        let n = files.len() as f64;
        let mean = |f: fn(&FileMetrics) -> f64| {
            (!files.is_empty()).then(|| files.iter().map(f).sum::<f64>() / n)
        };
        Self {
            files: files.len(),
            si_sdr_db: mean(|m| m.si_sdr_db),
            lsd_db: mean(|m| m.lsd_db),
            mrstft: mean(|m| m.mrstft),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    pub crate_version: String,
    pub threads: usize,
    pub wall_s: f64,
}

impl RuntimeMeta {
    pub fn here(wall_s: f64) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_s,
        }
    }
}

/// Published subjective scores, carried for side-by-side reading only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub system: String,
    pub label: String,
    pub col: f64,
    pub disc: f64,
    pub loud: f64,
    pub noise: f64,
    pub reverb: f64,
    pub sig: f64,
    pub ovrl: f64,
    pub wacc_pct: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |system: &str, v: [f64; 8]| ReferenceRow {
        system: system.to_string(),
        label: REFERENCE_LABEL.to_string(),
        col: v[0],
        disc: v[1],
        loud: v[2],
        noise: v[3],
        reverb: v[4],
        sig: v[5],
        ovrl: v[6],
        wacc_pct: v[7],
    };
    vec![
        row("noisy", [3.34, 3.70, 3.78, 3.21, 3.40, 3.05, 2.58, 82.68]),
        row("rt", [4.08, 3.89, 4.34, 4.30, 4.27, 3.83, 3.49, 78.23]),
        row("nrt", [4.01, 3.89, 4.34, 4.28, 4.24, 3.74, 3.43, 77.30]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub files: Vec<FileMetrics>,
    pub aggregate: Aggregate,
    pub model: Option<ModelIdentity>,
    pub runtime: RuntimeMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtf: Option<RtfResult>,
    pub reference: Vec<ReferenceRow>,
}

impl MetricsReport {
    pub fn new(files: Vec<FileMetrics>, model: Option<ModelIdentity>, runtime: RuntimeMeta) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            aggregate: Aggregate::of(&files),
            files,
            model,
            runtime,
            rtf: None,
            reference: reference_rows(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per file followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,si_sdr_db,lsd_db,mrstft\n");
        for f in &self.files {
            s += &format!("{},{},{},{}\n", csv_field(&f.id), f.si_sdr_db, f.lsd_db, f.mrstft);
        }
        let a = &self.aggregate;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        s += &format!("mean,{},{},{}\n", cell(a.si_sdr_db), cell(a.lsd_db), cell(a.mrstft));
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Score `(id, estimate, reference)` triples in parallel, keeping input order.
pub fn score_all(items: &[(String, Waveform, Waveform)]) -> Result<Vec<FileMetrics>> {
    items
        .par_iter()
        .map(|(id, est, reference)| compute_metrics(id, est, reference))
        .collect()
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    out.sort();
    Ok(out)
}

/// Pair every `.wav` in `est_dir` with the same file name in `ref_dir`.
pub fn eval_dirs(est_dir: &Path, ref_dir: &Path) -> Result<Vec<FileMetrics>> {
    let mut items = Vec::new();
    for est in wav_files(est_dir)? {
        let name = est.file_name().expect("listed file");
        let reference = ref_dir.join(name);
        if !reference.exists() {
            return Err(Error::validation(format!(
                "no reference for {} in {}",
                est.display(),
                ref_dir.display()
            )));
        }
        let id = est.file_stem().expect("listed file").to_string_lossy().into_owned();
        items.push((id, read_wav(&est)?, read_wav(&reference)?));
    }
    if items.is_empty() {
        return Err(Error::validation(format!("no .wav files in {}", est_dir.display())));
    }
    score_all(&items)
}

/// Score a degraded corpus against its clean side, enhancing first when a
/// pipeline is given.
pub fn eval_corpus(manifest: &CorpusManifest, pipeline: Option<&Pipeline>) -> Result<Vec<FileMetrics>> {
    let pairs = load_pairs(manifest)?;
    let items = pairs
        .into_iter()
        .map(|(id, degraded, clean)| {
            let est = match pipeline {
                Some(p) => p.enhance(&degraded)?,
                None => degraded,
            };
            Ok((id, est, clean))
        })
        .collect::<Result<Vec<_>>>()?;
    score_all(&items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{synth, write_wav};

    fn metrics(id: &str, s: f64, l: f64, m: f64) -> FileMetrics {
        FileMetrics { id: id.into(), si_sdr_db: s, lsd_db: l, mrstft: m }
    }

    #[test]
    fn aggregate_is_the_arithmetic_mean() {
        let files = vec![metrics("a", 10.0, 1.0, 0.5), metrics("b", 20.0, 3.0, 1.5)];
        let r = MetricsReport::new(files, None, RuntimeMeta::here(0.0));
        assert_eq!(r.aggregate, Aggregate { files: 2, si_sdr_db: Some(15.0), lsd_db: Some(2.0), mrstft: Some(1.0) });
        assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
        assert_eq!(MetricsReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert!(r.reference.iter().all(|x| x.label == REFERENCE_LABEL));
    }

    #[test]
    fn other_schema_versions_are_refused() {
        let mut r = MetricsReport::new(vec![], None, RuntimeMeta::here(0.0));
        r.schema_version = 99;
        let text = serde_json::to_string(&r).unwrap();
        assert!(matches!(MetricsReport::from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_has_a_row_per_file_and_a_mean() {
        let files = vec![metrics("x,1", 1.0, 2.0, 3.0)];
        let csv = MetricsReport::new(files, None, RuntimeMeta::here(0.0)).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, ["id,si_sdr_db,lsd_db,mrstft", "\"x,1\",1,2,3", "mean,1,2,3"]);
    }

    #[test]
    fn directory_pairs_match_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let (e, r) = (dir.path().join("est"), dir.path().join("ref"));
        std::fs::create_dir_all(&e).unwrap();
        std::fs::create_dir_all(&r).unwrap();
        for (i, name) in ["b.wav", "a.wav"].iter().enumerate() {
            let x = synth::voiced_speech(i as u64, 0.3, 48_000);
            write_wav(e.join(name), &x).unwrap();
            write_wav(r.join(name), &x).unwrap();
        }
        let m = eval_dirs(&e, &r).unwrap();
        assert_eq!(m.iter().map(|f| f.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert!(m.iter().all(|f| f.lsd_db == 0.0));
        std::fs::remove_file(r.join("a.wav")).unwrap();
        assert!(matches!(eval_dirs(&e, &r), Err(Error::Validation(_))));
    }
}
