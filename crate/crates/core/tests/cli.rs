use std::path::Path;
use std::process::{Command, Output};

use ssi_core::degrade::{CorpusManifest, DegradationRecipe, ManifestRecord};
use ssi_core::dsp::{synth, write_wav};
use ssi_core::eval::MetricsReport;

fn ssi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssi")).args(args).output().expect("run ssi")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn degrade_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut m = CorpusManifest::default();
    for i in 0..2 {
        let c = root.join(format!("c{i}.wav"));
        let n = root.join(format!("n{i}.wav"));
        write_wav(&c, &synth::voiced_speech(i, 0.3, 48_000)).unwrap();
        write_wav(&n, &synth::colored_noise(i, 4800, 48_000)).unwrap();
        let mut r = ManifestRecord::new(format!("u{i}"), c);
        r.noises.push(n);
        m.records.push(r);
    }
    let manifest = root.join("in.jsonl");
    m.save(&manifest).unwrap();
    let recipe = root.join("recipe.json");
    std::fs::write(&recipe, serde_json::to_string(&DegradationRecipe::default()).unwrap()).unwrap();
    let out = root.join("corpus");

    let o = ssi(&["degrade", "--manifest", s(&manifest), "--recipe", s(&recipe), "--out", s(&out), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = root.join("report.json");
    let csv = root.join("report.csv");
    let built = out.join("manifest.jsonl");
    let o = ssi(&["eval", "--corpus", s(&built), "--out", s(&report), "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = MetricsReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.aggregate.files, 2);
    assert!(r.model.is_none());
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 4);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = ssi(&["train", "--stage", "gan", "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(3));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json}\n").unwrap();
    let o = ssi(&["eval", "--corpus", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));

    let o = ssi(&["bench-rtf", "--duration", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn params_lists_both_profiles() {
    let o = ssi(&["params"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("rt") && text.contains("nrt"));
}
