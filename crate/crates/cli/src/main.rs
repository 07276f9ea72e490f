use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use omnivfi::config::KeyValues;
use omnivfi::dataset::synthetic::write_toy_fixture;
use omnivfi::dataset::{ingest, FlowSource, Layout, TripletManifest};
use omnivfi::frame::image_dimensions;
use omnivfi::geometry::condition_map;
use omnivfi::model::{Checkpoint, Net};
use omnivfi::runner::{ablate, evaluate, train, PredictionSource, TrainConfig, TrainOptions};
use omnivfi::Frame;

#[derive(Parser)]
#[command(
    name = "omnivfi",
    version,
    about = "Frame interpolation for equirectangular 360-degree video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build stratified train/test manifests from a tree of clip folders.
    Prepare {
        #[arg(long)]
        root: PathBuf,
        /// Preset name (odv360, 360vds, 360uhd, combined, synthetic) or layout file.
        #[arg(long, default_value = "combined")]
        layout: String,
        /// `oracle` or `block-matching`.
        #[arg(long, default_value = "block-matching")]
        flow_provider: String,
        /// Manifest directory (defaults to the root).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the condition map for the frame size as raw f32 LE.
        #[arg(long)]
        export_condition_map: Option<PathBuf>,
        /// Write the four toy clips under the root first.
        #[arg(long)]
        synthesize_toy: bool,
    },
    /// Recompute settings from motion extents and print the bucket counts.
    Stratify {
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the result (defaults to rewriting the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Validation manifest scored every `train.validate_every` epochs.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Score a checkpoint or a directory of `<sample_id>.png` predictions.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Interpolate {
        #[arg(long)]
        in1: PathBuf,
        #[arg(long)]
        in2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Train and score the four guard/FTB variants; exits nonzero if any fails.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        test_manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from the small toy preset instead of the full recipe.
    #[arg(long)]
    toy: bool,
    /// Key-value config file with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set train.lr_init=5e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = if self.toy {
            TrainConfig::toy()
        } else {
            TrainConfig::full()
        };
        if let Some(path) = &self.config {
            cfg = TrainConfig::load(path, cfg).with_context(|| format!("loading {}", path.display()))?;
        }
        if !self.overrides.is_empty() {
            let kv = KeyValues::parse(&self.overrides.join("\n")).context("parsing --set")?;
            cfg.apply(&kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_manifest(path: &Path) -> Result<TripletManifest> {
    TripletManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prepare {
            root,
            layout,
            flow_provider,
            out,
            export_condition_map,
            synthesize_toy,
        } => {
            if synthesize_toy {
                write_toy_fixture(&root)?;
                info!("wrote toy clips under {}", root.display());
            }
            let layout = Layout::resolve(&layout)?;
            let flow: FlowSource = flow_provider.parse()?;
            let outcome = ingest(&root, &layout, &flow)?;
            for e in &outcome.errors {
                warn!("clip {} skipped: {}", e.clip, e.message);
            }
            let dir = out.unwrap_or_else(|| root.clone());
            std::fs::create_dir_all(&dir)?;
            outcome.write(&dir)?;
            println!(
                "train {} / test {} triplets, settings {}, {} clips skipped",
                outcome.train.len(),
                outcome.test.len(),
                outcome.counts(),
                outcome.errors.len()
            );
            if let Some(path) = export_condition_map {
                let first = outcome.train.entries.iter().chain(&outcome.test.entries).next();
                let Some(t) = first else {
                    bail!("no triplets to size the condition map from")
                };
                let (h, w) = image_dimensions(&t.i1)?;
                condition_map(h, w)?.write_f32_le(&path)?;
                info!("condition map {h}x{w} written to {}", path.display());
            }
        }
        Command::Stratify { manifest, out } => {
            let mut m = TripletManifest::load_unchecked(&manifest)?;
            let counts = m.stratify()?;
            m.write_jsonl(out.as_ref().unwrap_or(&manifest))?;
            println!("{counts}");
        }
        Command::Train {
            config,
            manifest,
            out,
            resume,
            val,
        } => {
            let cfg = config.resolve()?;
            let m = load_manifest(&manifest)?;
            let validation = val.as_deref().map(load_manifest).transpose()?;
            let opts = TrainOptions {
                out_dir: out,
                resume,
                validation,
                stop_after: None,
            };
            let outcome = train(&m, &cfg, &opts)?;
            println!(
                "{} iterations, loss {:?} -> {:?}, checkpoint {}",
                outcome.iterations,
                outcome.initial_loss(),
                outcome.final_loss(),
                outcome.last_checkpoint.display()
            );
            if !outcome.skipped.is_empty() {
                warn!("{} samples were skipped", outcome.skipped.len());
            }
        }
        Command::Eval {
            manifest,
            ckpt,
            predictions,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let source = match (ckpt, predictions) {
                (Some(c), _) => PredictionSource::Checkpoint(c),
                (None, Some(p)) => PredictionSource::Directory(p),
                (None, None) => bail!("either --ckpt or --predictions is required"),
            };
            let report = evaluate(&m, &source)?;
            report.write(&out, "report")?;
            print!("{}", report.summary_csv()?);
            if !report.missing.is_empty() {
                warn!("{} samples had no usable prediction", report.missing.len());
            }
        }
        Command::Interpolate { in1, in2, out, ckpt } => {
            let net: Net<f32> = Checkpoint::load(&ckpt)?.net()?;
            let (a, b) = (Frame::load(&in1)?, Frame::load(&in2)?);
            net.interpolate(&a, &b)?.save_png(&out)?;
        }
        Command::Ablate {
            config,
            train_manifest,
            test_manifest,
            out,
        } => {
            let cfg = config.resolve()?;
            let (tr, te) = (load_manifest(&train_manifest)?, load_manifest(&test_manifest)?);
            let outcome = ablate(&tr, &te, &cfg, &out)?;
            outcome.write(&out)?;
            print!("{}", outcome.to_csv()?);
            if outcome.failed().next().is_some() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
