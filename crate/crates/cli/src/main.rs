use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semg_fin::dataset::write_csv;
use semg_fin::features::{extract_all, write_feature_dump};
use semg_fin::pipeline::experiments::load_recordings;
use semg_fin::pipeline::{Experiment, ExperimentConfig, ExperimentReport, Pipeline, Prepared};
use semg_fin::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Feature-imitating networks for sEMG hand-movement recognition.
#[derive(Parser)]
#[command(name = "semg-fin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic recordings as subject CSV files.
    SynthData(Common),
    /// Write raw window features of the prepared data as CSV.
    ExtractFeatures(Common),
    /// Train the four imitation networks and evaluate them on the test split.
    TrainFin(Common),
    /// Train classifiers on ground-truth features (pooled and per-subject).
    TrainCnn(Common),
    /// Per-subject fine-tuning of the imitation networks with the classifier.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Directory holding fin-<FEATURE>.ckpt files to start from instead of training.
        #[arg(long)]
        fins: Option<PathBuf>,
    },
    /// Evaluate saved checkpoints on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding fin-*.ckpt and joint-s<id>.ckpt files.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Fine-tune at every configured horizon.
    SweepHorizon(Common),
    /// Fine-tune at every configured fraction of the fine-tuning data.
    SweepFraction(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory of subject_<id>.csv files; synthetic data is used when omitted.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    horizon_ms: Option<u32>,
    /// Subject ids, e.g. `1-4,26`.
    #[arg(long)]
    subjects: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(f) = self.fraction {
            cfg.finetune_fraction = f;
        }
        if let Some(h) = self.horizon_ms {
            cfg.horizon_ms = h;
        }
        if let Some(s) = &self.subjects {
            cfg.set("subjects", s)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn emit(report: &ExperimentReport, out: &Path, stem: &str) -> Result<()> {
    report.write(out, stem)?;
    println!("wrote {}", out.join(format!("{stem}.json")).display());
    for f in &report.fin {
        println!(
            "{} h={}ms: r2={:.4} map={:.4} ({} pairs)",
            f.eval.feature, f.horizon_ms, f.eval.r2, f.eval.map, f.eval.pairs
        );
    }
    for m in &report.models {
        for g in &m.groups {
            println!(
                "{} h={}ms fraction={}: {} accuracy {:.4} ± {:.4} over {} subjects",
                m.model, m.horizon_ms, m.fraction, g.group, g.mean, g.std, g.subjects
            );
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthData(c) => {
            let mut cfg = c.config()?;
            cfg.data_dir = None;
            mkdir(&c.out)?;
            let (recs, _) = load_recordings(&cfg)?;
            for r in &recs {
                let path = c.out.join(semg_fin::dataset::subject_file_name(r.subject_id));
                write_csv(r, &path)?;
                println!("wrote {} ({} samples)", path.display(), r.len());
            }
        }
        Command::ExtractFeatures(c) => {
            let cfg = c.config()?;
            mkdir(&c.out)?;
            let prep = Prepared::new(&cfg)?;
            let path = c.out.join("features.csv");
            write_feature_dump(&path, prep.windows.windows(), &extract_all(&prep.windows))?;
            println!("wrote {} ({} windows)", path.display(), prep.windows.len());
        }
        Command::TrainFin(c) => {
            let mut cfg = c.config()?;
            cfg.experiment = Experiment::Exp1Fin;
            let h = cfg.horizon()?;
            let mut p = Pipeline::new(cfg)?;
            let report = p.exp1()?;
            p.save_fins(h, &c.out)?;
            emit(&report, &c.out, "exp1-fin")?;
        }
        Command::TrainCnn(c) => {
            let mut cfg = c.config()?;
            cfg.experiment = Experiment::Exp3Cnn;
            let h = cfg.horizon()?;
            let mut p = Pipeline::new(cfg)?;
            let report = p.exp3()?;
            p.save_pretrained_cnn(h, &c.out.join("cnn-II.ckpt"))?;
            emit(&report, &c.out, "exp3-cnn")?;
        }
        Command::Finetune { common: c, fins } => {
            let mut cfg = c.config()?;
            cfg.experiment = Experiment::Exp4Finetune;
            let h = cfg.horizon()?;
            let mut p = Pipeline::new(cfg)?;
            if let Some(dir) = fins {
                p.load_fins(h, &dir)?;
            }
            let report = p.exp4_with_checkpoints(&c.out)?;
            emit(&report, &c.out, "exp4-finetune")?;
        }
        Command::Evaluate { common: c, checkpoints } => {
            let mut p = Pipeline::new(c.config()?)?;
            let report = p.evaluate_checkpoints(&checkpoints)?;
            emit(&report, &c.out, "evaluate")?;
        }
        Command::SweepHorizon(c) => {
            let mut cfg = c.config()?;
            cfg.experiment = Experiment::Exp2Horizon;
            let report = Pipeline::new(cfg)?.horizon_sweep()?;
            emit(&report, &c.out, "exp2-horizon")?;
        }
        Command::SweepFraction(c) => {
            let report = Pipeline::new(c.config()?)?.fraction_sweep()?;
            emit(&report, &c.out, "fraction-sweep")?;
        }
    }
    Ok(())
}

/// One JSON object per line so scripts can parse failures.
fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
