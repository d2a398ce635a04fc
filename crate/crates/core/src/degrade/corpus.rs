//! Paired corpus construction from a JSONL manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recipe::{utterance_seed, DegradationRecipe, RealizedDegradation};
use crate::dsp::{read_wav, write_wav, Waveform};
use crate::error::{Error, Result};

pub const OUTPUT_MANIFEST: &str = "manifest.jsonl";

/// One utterance. Input manifests carry only the source paths; built corpora
/// fill in `realized` and the output paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub clean: PathBuf,
    #[serde(default)]
    pub noises: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized: Option<RealizedDegradation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_out: Option<PathBuf>,
}

impl ManifestRecord {
    pub fn new(id: impl Into<String>, clean: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            clean: clean.into(),
            noises: Vec::new(),
            rir: None,
            seed: None,
            realized: None,
            degraded_out: None,
            clean_out: None,
        }
    }

    fn check_id(&self) -> Result<()> {
        let ok = !self.id.is_empty()
            && self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !self.id.starts_with('.');
        if !ok {
            return Err(Error::validation(format!(
                "utterance id {:?} must be non-empty and use [A-Za-z0-9._-]",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<ManifestRecord>,
}

impl CorpusManifest {
    /// Parse JSONL. Relative paths resolve against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut r: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                Error::validation(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            resolve(&mut r.clean);
            r.noises.iter_mut().for_each(resolve);
            if let Some(p) = r.rir.as_mut() {
                resolve(p);
            }
            if let Some(p) = r.degraded_out.as_mut() {
                resolve(p);
            }
            if let Some(p) = r.clean_out.as_mut() {
                resolve(p);
            }
            records.push(r);
        }
        let m = Self { records };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            r.check_id()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate utterance id {:?}", r.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFailure {
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct CorpusSummary {
    pub manifest: CorpusManifest,
    pub failures: Vec<RecordFailure>,
    pub manifest_path: PathBuf,
}

fn load_sources(r: &ManifestRecord) -> Result<(Waveform, Vec<Waveform>, Option<Waveform>)> {
    let clean = read_wav(&r.clean)?;
    let noises = r.noises.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
    let rir = r.rir.as_deref().map(read_wav).transpose()?;
    Ok((clean, noises, rir))
}

/// Render one record, returning (degraded, clean, realization).
pub fn render_record(
    r: &ManifestRecord,
    recipe: &DegradationRecipe,
) -> Result<(Waveform, Waveform, RealizedDegradation)> {
    let (clean, noises, rir) = load_sources(r)?;
    let realized =
        RealizedDegradation::draw(recipe, &r.id, &clean, noises.len(), rir.is_some())?;
    let degraded = realized.render(&clean, &noises, rir.as_ref())?;
    Ok((degraded, clean, realized))
}

/// Re-render a built record from its recorded draw without touching an RNG.
pub fn replay_record(r: &ManifestRecord) -> Result<Waveform> {
    let realized = r
        .realized
        .as_ref()
        .ok_or_else(|| Error::validation(format!("record {:?} has no realized draw", r.id)))?;
    let (clean, noises, rir) = load_sources(r)?;
    realized.render(&clean, &noises, rir.as_ref())
}

fn build_one(r: &ManifestRecord, recipe: &DegradationRecipe, out_dir: &Path) -> Result<ManifestRecord> {
    let (degraded, clean, realized) = render_record(r, recipe)?;
    let degraded_out = out_dir.join(format!("{}_degraded.wav", r.id));
    let clean_out = out_dir.join(format!("{}_clean.wav", r.id));
    write_wav(&degraded_out, &degraded)?;
    write_wav(&clean_out, &clean)?;
    let rec = ManifestRecord {
        seed: Some(utterance_seed(recipe.seed, &r.id)),
        realized: Some(realized),
        degraded_out: Some(degraded_out),
        clean_out: Some(clean_out),
        ..r.clone()
    };
    let sidecar = out_dir.join(format!("{}.json", r.id));
    let text = serde_json::to_string_pretty(&rec)?;
    fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(rec)
}

/// Render every record with `workers` threads. Failed records are reported
/// and skipped; the output manifest lists successes in input order.
pub fn build_corpus(
    manifest: &CorpusManifest,
    recipe: &DegradationRecipe,
    out_dir: &Path,
    workers: usize,
) -> Result<CorpusSummary> {
    recipe.validate()?;
    manifest.validate()?;
    if manifest.records.is_empty() {
        return Err(Error::config("manifest has no records"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let results: Vec<Result<ManifestRecord>> = pool.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| build_one(r, recipe, out_dir))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in manifest.records.iter().zip(results) {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(RecordFailure {
                id: r.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::validation(format!(
            "no record could be built ({} failures)",
            failures.len()
        )));
    }
    let out = CorpusManifest { records };
    let manifest_path = out_dir.join(OUTPUT_MANIFEST);
    out.save(&manifest_path)?;
    if !failures.is_empty() {
        let log = out_dir.join("failures.jsonl");
        let mut f = fs::File::create(&log).map_err(|e| Error::io(&log, e))?;
        for x in &failures {
            let line = serde_json::json!({"id": x.id, "error": x.message});
            writeln!(f, "{line}").map_err(|e| Error::io(&log, e))?;
        }
    }
    Ok(CorpusSummary {
        manifest: out,
        failures,
        manifest_path,
    })
}

/// Load (degraded, clean) pairs from a built corpus manifest.
pub fn load_pairs(manifest: &CorpusManifest) -> Result<Vec<(String, Waveform, Waveform)>> {
    manifest
        .records
        .iter()
        .map(|r| {
            let d = r.degraded_out.as_ref().ok_or_else(|| {
                Error::config(format!("record {:?} is not part of a built corpus", r.id))
            })?;
            let c = r.clean_out.as_ref().unwrap_or(&r.clean);
            Ok((r.id.clone(), read_wav(d)?, read_wav(c)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth;

    fn fixture(dir: &Path, n: usize) -> CorpusManifest {
        let noise = dir.join("noise.wav");
        write_wav(&noise, &synth::white_noise(99, 9600, 0.1, 48_000)).unwrap();
        let records = (0..n)
            .map(|i| {
                let clean = dir.join(format!("c{i}.wav"));
                write_wav(&clean, &synth::voiced_speech(i as u64, 0.1, 48_000)).unwrap();
                let mut r = ManifestRecord::new(format!("u{i:03}"), clean);
                r.noises = vec![noise.clone()];
                r
            })
            .collect();
        CorpusManifest { records }
    }

    #[test]
    fn zero_probabilities_copy_clean_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture(dir.path(), 3);
        let out = dir.path().join("out");
        let s = build_corpus(&m, &DegradationRecipe::passthrough(5), &out, 2).unwrap();
        assert!(s.failures.is_empty());
        for r in &s.manifest.records {
            let d = fs::read(r.degraded_out.as_ref().unwrap()).unwrap();
            let c = fs::read(r.clean_out.as_ref().unwrap()).unwrap();
            assert_eq!(d, c);
        }
    }

    #[test]
    fn same_seed_gives_identical_corpus_and_replay_matches() {
        let dir = tempfile::tempdir().unwrap();
        let m = fixture(dir.path(), 4);
        let recipe = DegradationRecipe {
            seed: 11,
            ..DegradationRecipe::default()
        };
        let a = build_corpus(&m, &recipe, &dir.path().join("a"), 1).unwrap();
        let b = build_corpus(&m, &recipe, &dir.path().join("b"), 3).unwrap();
        for (x, y) in a.manifest.records.iter().zip(&b.manifest.records) {
            assert_eq!(x.realized, y.realized);
            let fx = fs::read(x.degraded_out.as_ref().unwrap()).unwrap();
            let fy = fs::read(y.degraded_out.as_ref().unwrap()).unwrap();
            assert_eq!(fx, fy);
        }
        let reloaded = CorpusManifest::load(&a.manifest_path).unwrap();
        for r in &reloaded.records {
            let replay = replay_record(r).unwrap();
            let stored = read_wav(r.degraded_out.as_ref().unwrap()).unwrap();
            assert_eq!(replay, stored);
        }
    }

    #[test]
    fn missing_files_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = fixture(dir.path(), 2);
        m.records.push(ManifestRecord::new("ghost", dir.path().join("nope.wav")));
        let s = build_corpus(&m, &DegradationRecipe::passthrough(0), &dir.path().join("o"), 1)
            .unwrap();
        assert_eq!(s.manifest.records.len(), 2);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].id, "ghost");

        let only_missing = CorpusManifest {
            records: vec![ManifestRecord::new("ghost", dir.path().join("nope.wav"))],
        };
        assert!(build_corpus(
            &only_missing,
            &DegradationRecipe::passthrough(0),
            &dir.path().join("p"),
            1
        )
        .is_err());
    }

    #[test]
    fn manifest_paths_resolve_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        write_wav(dir.path().join("a.wav"), &synth::sine(200.0, 0.5, 960, 48_000)).unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"clean\":\"a.wav\"}\n\n").unwrap();
        let m = CorpusManifest::load(&path).unwrap();
        assert_eq!(m.records[0].clean, dir.path().join("a.wav"));
        fs::write(&path, "{\"id\":\"a\",\"clean\":\"a.wav\"}\n{\"id\":\"a\",\"clean\":\"a.wav\"}\n")
            .unwrap();
        assert!(CorpusManifest::load(&path).is_err());
        fs::write(&path, "{\"id\":\"../x\",\"clean\":\"a.wav\"}\n").unwrap();
        assert!(CorpusManifest::load(&path).is_err());
    }
}
