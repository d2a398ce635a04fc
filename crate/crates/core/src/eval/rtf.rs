//! Single-threaded real-time-factor measurement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pipeline::Pipeline;
use crate::dsp::{synth, Waveform};
use crate::error::{Error, Result};

pub const MIN_BENCH_SECONDS: f64 = 10.0;
/// Published RTFs for the two profiles, measured on other hardware.
pub const REFERENCE_RTF_RT: f64 = 0.42;
pub const REFERENCE_RTF_NRT: f64 = 0.62;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtfResult {
    pub audio_s: f64,
    /// Median over `runs_s`.
    pub wall_s: f64,
    pub rtf: f64,
    pub threads: usize,
    pub warmup_runs: usize,
    pub runs_s: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Summarise timed runs of `audio_s` seconds of audio.
pub fn summarize(audio_s: f64, runs_s: Vec<f64>, warmup_runs: usize, threads: usize) -> RtfResult {
    let wall_s = median(&runs_s);
    RtfResult {
        audio_s,
        wall_s,
        rtf: wall_s / audio_s,
        threads,
        warmup_runs,
        runs_s,
    }
}

/// Time `run` on one thread: `warmup` discarded calls, then `repeats`
/// measured ones.
pub fn time_single_threaded(
    audio_s: f64,
    warmup: usize,
    repeats: usize,
    mut run: impl FnMut() -> Result<()> + Send,
) -> Result<RtfResult> {
    if !(audio_s >= MIN_BENCH_SECONDS) {
        return Err(Error::validation(format!(
            "benchmark audio must be at least {MIN_BENCH_SECONDS} s, got {audio_s}"
        )));
    }
    if warmup == 0 || repeats == 0 {
        return Err(Error::validation("need at least one warmup and one measured run"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| {
        for _ in 0..warmup {
            run()?;
        }
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t = Instant::now();
            run()?;
            runs.push(t.elapsed().as_secs_f64());
        }
        Ok(summarize(audio_s, runs, warmup, rayon::current_num_threads()))
    })
}

/// Enhance `duration_s` seconds of synthetic speech end to end.
pub fn bench_rtf(pipeline: &Pipeline, duration_s: f64, warmup: usize, repeats: usize) -> Result<RtfResult> {
    let input: Waveform = synth::voiced_speech(7, duration_s.max(0.0), pipeline.sample_rate());
    let audio_s = input.duration_s();
    time_single_threaded(audio_s, warmup, repeats, || pipeline.enhance(&input).map(|_| ()))
}
