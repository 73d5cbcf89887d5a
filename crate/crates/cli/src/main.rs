use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affdetect::pipeline::{
    evaluate_split, extract, infer_file, train, train_mlp, write_corpus, Detector, FeatureIndex,
    Manifest, RunConfig, Split, INDEX_FILE,
};
use affdetect::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "affdetect",
    version,
    about = "Synthetic-speech detection with fused cepstral features"
)]
struct Cli {
    /// Worker threads. Training defaults to 1 so runs are bitwise reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config (TOML). Every key is optional; unknown keys are errors.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded two-class WAV corpus and its manifest.
    Synthgen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut manifest audio into one-second segments and write feature files.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Audio manifest CSV.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model on the train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Feature index written by `extract`.
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one split and write metric reports.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature index written by `extract`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every one-second segment of a WAV file.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
        /// Also write the scores to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the fully connected baseline.
    BaselineMlp {
        #[command(flatten)]
        common: Common,
        /// Feature index written by `extract`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn init_threads(threads: Option<usize>, training: bool) -> Result<()> {
    let n = match (threads, training) {
        (Some(n), _) => n,
        (None, true) => 1,
        (None, false) => return Ok(()),
    };
    if n == 0 {
        return Err(Error::Config("--threads must be positive".into()));
    }
    if training && n > 1 {
        log::warn!(
            "training on {n} threads; results are not guaranteed identical across thread counts"
        );
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    let training = matches!(
        cli.command,
        Command::Train { .. } | Command::BaselineMlp { .. }
    );
    init_threads(cli.threads, training)?;
    match cli.command {
        Command::Synthgen { common, out } => {
            let cfg = common.load()?;
            let m = write_corpus(&cfg.synth, cfg.seed, &out)?;
            log::info!(
                "wrote {} clips ({} train, {} test, {} eval) to {}",
                m.entries.len(),
                m.count(Split::Train),
                m.count(Split::Test),
                m.count(Split::Eval),
                out.display()
            );
        }
        Command::Extract {
            common,
            manifest,
            out,
        } => {
            let cfg = common.load()?;
            let m = Manifest::load(&manifest)?;
            let index = extract(&m, &cfg.features, &cfg.feature_kinds(), &out)?;
            log::info!(
                "{} segments from {} files written to {}",
                index.segments.len(),
                m.entries.len() - index.failures.len(),
                out.join(INDEX_FILE).display()
            );
            if !index.failures.is_empty() {
                eprintln!("{} file(s) failed:", index.failures.len());
                for f in &index.failures {
                    eprintln!("  {}: {}", f.source, f.error);
                }
            }
        }
        Command::Train {
            common,
            manifest,
            out,
        } => {
            let cfg = common.load()?;
            let out = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                Error::Config("no output directory: pass --out or set output_dir".into())
            })?;
            let index = FeatureIndex::load(&manifest)?;
            let mut trained = train(&index, &cfg)?;
            trained.save(&out)?;
            log::info!("checkpoint written to {}", out.display());
        }
        Command::Eval {
            common,
            checkpoint,
            manifest,
            split,
            out,
        } => {
            let det = Detector::load(&checkpoint)?;
            let cfg = match &common.config {
                Some(_) => {
                    let cfg = common.load()?;
                    det.verify_config(&cfg)?;
                    cfg
                }
                None => RunConfig::default(),
            };
            let index = FeatureIndex::load(&manifest)?;
            let result = evaluate_split(
                &det,
                &index,
                split,
                cfg.eval.threshold,
                cfg.eval.pool_per_file,
            )?;
            result.save(&out)?;
            log::info!(
                "{split}: accuracy {:.4} auc {:.4} eer {:.4}; reports in {}",
                result.report.accuracy,
                result.report.auc,
                result.report.eer,
                out.display()
            );
        }
        Command::Infer {
            common,
            checkpoint,
            wav,
            out,
        } => {
            let det = Detector::load(&checkpoint)?;
            let threshold = match &common.config {
                Some(_) => {
                    let cfg = common.load()?;
                    det.verify_config(&cfg)?;
                    cfg.eval.threshold
                }
                None => RunConfig::default().eval.threshold,
            };
            let result = infer_file(&det, &wav, threshold)?;
            let text = result.to_text();
            print!("{text}");
            if let Some(p) = out {
                write_text(&p, &text)?;
            }
        }
        Command::BaselineMlp {
            common,
            manifest,
            split,
            out,
        } => {
            let cfg = common.load()?;
            let index = FeatureIndex::load(&manifest)?;
            let result = train_mlp(&index, &cfg.mlp, cfg.seed, split, cfg.eval.threshold)?;
            let r = &result.report;
            write_text(
                &out.join("report.txt"),
                &format!("split: {split}  model: mlp\n{}", r.to_text()),
            )?;
            write_text(&out.join("metrics.kv"), &r.to_key_value())?;
            write_text(&out.join("roc.txt"), &r.roc_text())?;
            log::info!(
                "mlp {split}: accuracy {:.4} auc {:.4} eer {:.4}",
                r.accuracy,
                r.auc,
                r.eer
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
