use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use ssi_core::degrade::{build_corpus, CorpusManifest, DegradationRecipe};
use ssi_core::dsp::{read_wav_at, write_wav};
use ssi_core::eval::{
    bench_rtf, eval_corpus, eval_dirs, report_profiles, MetricsReport, Pipeline, RuntimeMeta, REFERENCE_RTF_NRT,
    REFERENCE_RTF_RT,
};
use ssi_core::gan::GeneratorConfig;
use ssi_core::mfnet::MfNetConfig;
use ssi_core::train::{train_gan, train_mfnet, Stage, TrainConfig};
use ssi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ssi", version, about = "Two-stage speech restoration and enhancement")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a degraded corpus from clean sources and a recipe.
    Degrade {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the recipe seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train the restoration GAN or MF-Net.
    Train {
        #[arg(long)]
        stage: Stage,
        /// TOML or JSON training config.
        #[arg(long)]
        config: PathBuf,
        /// Frozen generator checkpoint, required for `--stage mfnet`.
        #[arg(long)]
        gan_ckpt: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Run both stages over a file or every `.wav` in a directory.
    Enhance {
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        mfnet: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_mismatch: bool,
    },
    /// Score estimates against references and emit a metrics report.
    Eval {
        /// Directory of estimates, paired by file name with `--reference`.
        #[arg(long, requires = "reference", conflicts_with = "corpus")]
        est: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Built corpus manifest; degraded clips are enhanced first when
        /// checkpoints are given.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "mfnet")]
        gan: Option<PathBuf>,
        #[arg(long, requires = "gan")]
        mfnet: Option<PathBuf>,
        #[arg(long)]
        allow_mismatch: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a flat CSV export.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Median single-thread real-time factor of the full pipeline.
    BenchRtf {
        #[arg(long, value_enum, default_value_t = Profile::Both)]
        profile: Profile,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Parameter counts per module for both profiles.
    Params,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Profile {
    Rt,
    Nrt,
    Both,
}

fn degrade(manifest: &Path, recipe: &Path, out: &Path, seed: Option<u64>, workers: usize) -> Result<()> {
    let m = CorpusManifest::load(manifest)?;
    let text = std::fs::read_to_string(recipe).map_err(|e| Error::io(recipe, e))?;
    let mut r = DegradationRecipe::from_json(&text)?;
    if let Some(s) = seed {
        r.seed = s;
    }
    let summary = build_corpus(&m, &r, out, workers)?;
    println!(
        "built {} records, {} failed, manifest {}",
        summary.manifest.records.len(),
        summary.failures.len(),
        summary.manifest_path.display()
    );
    Ok(())
}

fn train(stage: Stage, config: &Path, gan_ckpt: Option<&Path>, max_steps: Option<usize>) -> Result<()> {
    let mut cfg = TrainConfig::from_path(config)?;
    cfg.stage = stage;
    if let Some(n) = max_steps {
        cfg.max_steps = n;
    }
    cfg.validate()?;
    let summary = match (stage, gan_ckpt) {
        (Stage::Gan, _) => train_gan(&cfg)?,
        (Stage::Mfnet, Some(g)) => train_mfnet(&cfg, g)?,
        (Stage::Mfnet, None) => return Err(Error::Config("--stage mfnet needs --gan-ckpt".into())),
    };
    println!(
        "{} stage: {} steps, checkpoint {}, log {}",
        stage.as_str(),
        summary.steps,
        summary.checkpoint.display(),
        summary.log.display()
    );
    Ok(())
}

fn enhance(gan: &Path, mfnet: &Path, input: &Path, out: &Path, allow_mismatch: bool) -> Result<()> {
    let p = Pipeline::load(gan, mfnet, allow_mismatch)?;
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| Error::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|f| {
                let name = f.file_name().expect("listed file").to_owned();
                (f, out.join(name))
            })
            .collect()
    } else {
        vec![(input.to_path_buf(), out.to_path_buf())]
    };
    for (src, dst) in &jobs {
        let x = read_wav_at(src, p.sample_rate())?;
        write_wav(dst, &p.enhance(&x)?)?;
    }
    println!("enhanced {} file(s)", jobs.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    est: Option<PathBuf>,
    reference: Option<PathBuf>,
    corpus: Option<PathBuf>,
    gan: Option<PathBuf>,
    mfnet: Option<PathBuf>,
    allow_mismatch: bool,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> Result<()> {
    let t = Instant::now();
    let pipeline = match (&gan, &mfnet) {
        (Some(g), Some(m)) => Some(Pipeline::load(g, m, allow_mismatch)?),
        _ => None,
    };
    let files = match (est, reference, corpus) {
        (Some(e), Some(r), None) => eval_dirs(&e, &r)?,
        (None, None, Some(c)) => eval_corpus(&CorpusManifest::load(&c)?, pipeline.as_ref())?,
        _ => return Err(Error::Config("give either --est with --reference, or --corpus".into())),
    };
    let report = MetricsReport::new(
        files,
        pipeline.map(|p| p.identity().clone()),
        RuntimeMeta::here(t.elapsed().as_secs_f64()),
    );
    let write = |path: &Path, text: String| {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    };
    match out {
        Some(p) => write(&p, report.to_json()?)?,
        None => println!("{}", report.to_json()?),
    }
    if let Some(p) = csv {
        write(&p, report.to_csv())?;
    }
    Ok(())
}

fn bench(profile: Profile, duration: f64, warmup: usize, repeats: usize) -> Result<()> {
    let mut runs = Vec::new();
    if profile != Profile::Nrt {
        runs.push(("rt", GeneratorConfig::rt(), MfNetConfig::rt(), REFERENCE_RTF_RT));
    }
    if profile != Profile::Rt {
        runs.push(("nrt", GeneratorConfig::nrt(), MfNetConfig::nrt(), REFERENCE_RTF_NRT));
    }
    for (name, g, m, reference) in runs {
        let p = Pipeline::from_configs(&g, &m, 0)?;
        let r = bench_rtf(&p, duration, warmup, repeats)?;
        println!(
            "{name}: rtf {:.3} (median {:.3} s over {} runs on {:.1} s audio, {} thread); \
             published {reference} on other hardware, for reference only",
            r.rtf,
            r.wall_s,
            r.runs_s.len(),
            r.audio_s,
            r.threads
        );
    }
    Ok(())
}

fn params() -> Result<()> {
    for r in report_profiles()? {
        print!("{}", r.render());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Degrade {
            manifest,
            recipe,
            out,
            seed,
            workers,
        } => degrade(&manifest, &recipe, &out, seed, workers),
        Cmd::Train {
            stage,
            config,
            gan_ckpt,
            max_steps,
        } => train(stage, &config, gan_ckpt.as_deref(), max_steps),
        Cmd::Enhance {
            gan,
            mfnet,
            input,
            out,
            allow_mismatch,
        } => enhance(&gan, &mfnet, &input, &out, allow_mismatch),
        Cmd::Eval {
            est,
            reference,
            corpus,
            gan,
            mfnet,
            allow_mismatch,
            out,
            csv,
        } => eval(est, reference, corpus, gan, mfnet, allow_mismatch, out, csv),
        Cmd::BenchRtf {
            profile,
            duration,
            warmup,
            repeats,
        } => bench(profile, duration, warmup, repeats),
        Cmd::Params => params(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
