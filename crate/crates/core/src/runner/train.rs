use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::evaluate::{evaluate_net, load_sample};
use super::{lr_at, TrainConfig};
use crate::dataset::{Triplet, TripletManifest};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::condition_map;
use crate::model::{Checkpoint, CheckpointMeta, Net};
use crate::nn::{AdamW, Graph, InputKind, Tensor};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const NAN_SNAPSHOT: &str = "nan-snapshot";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out_dir: PathBuf,
    /// Continue from this checkpoint. Its config fingerprint must match.
    pub resume: Option<PathBuf>,
    /// Scored every `validate_every` epochs; the best WS-PSNR is kept.
    pub validation: Option<TripletManifest>,
    /// Stop once this many iterations have completed (the schedule still
    /// spans the full run).
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub fingerprint: String,
    pub iterations: u64,
    pub total_iterations: u64,
    /// `(iteration, batch loss)` for every completed iteration, including
    /// those restored from a resumed checkpoint.
    pub loss_history: Vec<(u64, f64)>,
    /// Sample ids skipped at least once.
    pub skipped: Vec<String>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub best_ws_psnr: Option<f64>,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> Option<f64> {
        self.loss_history.first().map(|p| p.1)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().map(|p| p.1)
    }
}

#[derive(Serialize)]
struct NanReport<'a> {
    iteration: u64,
    learning_rate: f64,
    samples: &'a [String],
    message: String,
}

struct Batch {
    ids: Vec<String>,
    i1: Tensor<f32>,
    ig: Tensor<f32>,
    i2: Tensor<f32>,
}

/// Loads a batch, dropping samples that fail to load or whose size differs
/// from the most common size in the batch (ties go to the earlier sample).
fn load_batch(net: &Net<f32>, entries: &[&Triplet], skipped: &mut Vec<String>) -> Result<Option<Batch>> {
    let mut loaded: Vec<(String, Frame, Frame, Frame)> = Vec::with_capacity(entries.len());
    for t in entries {
        let sample = load_sample(t).and_then(|(a, g, b)| {
            net.config().check_dims(a.height(), a.width())?;
            Ok((a, g, b))
        });
        match sample {
            Ok((a, g, b)) => loaded.push((t.sample_id.clone(), a, g, b)),
            Err(e) => {
                log::warn!("skipping sample {}: {e}", t.sample_id);
                skipped.push(t.sample_id.clone());
            }
        }
    }
    let dims = |f: &Frame| (f.height(), f.width());
    let count = |d| loaded.iter().filter(|f| dims(&f.1) == d).count();
    let Some(batch_dims) = loaded
        .iter()
        .map(|f| dims(&f.1))
        .max_by(|a, b| count(*a).cmp(&count(*b)).then(std::cmp::Ordering::Greater))
    else {
        return Ok(None);
    };
    let mut frames = Vec::with_capacity(loaded.len());
    for f in loaded {
        if dims(&f.1) == batch_dims {
            frames.push(f);
        } else {
            log::warn!(
                "skipping sample {}: {}x{} frames in a {}x{} batch",
                f.0,
                f.1.height(),
                f.1.width(),
                batch_dims.0,
                batch_dims.1
            );
            skipped.push(f.0);
        }
    }
    if frames.is_empty() {
        return Ok(None);
    }
    let stack = |k: usize| -> Result<Tensor<f32>> {
        let refs: Vec<&Frame> = frames
            .iter()
            .map(|f| match k {
                0 => &f.1,
                1 => &f.2,
                _ => &f.3,
            })
            .collect();
        Tensor::from_frames(&refs)
    };
    Ok(Some(Batch {
        ids: frames.iter().map(|f| f.0.clone()).collect(),
        i1: stack(0)?,
        ig: stack(1)?,
        i2: stack(2)?,
    }))
}

/// One forward and backward pass; returns the loss and parameter gradients.
fn loss_and_grads(net: &Net<f32>, batch: &Batch, cfg: &TrainConfig) -> Result<(f64, Vec<Tensor<f32>>)> {
    let [_, _, h, w] = batch.i1.shape();
    let mut g = Graph::new();
    let a = g.input(batch.i1.clone(), InputKind::Image);
    let b = g.input(batch.i2.clone(), InputKind::Image);
    let target = g.input(batch.ig.clone(), InputKind::Target);
    let psi = g.input(Tensor::from_condition(&condition_map(h, w)?), InputKind::Constant);
    let fwd = net.forward(&mut g, a, b)?;
    let loss = g.weighted_smooth_l1(fwd.prediction, target, psi, cfg.loss.huber_delta, cfg.loss.reduction)?;
    let value = f64::from(g.value(loss).data()[0]);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = g.backward(loss)?.for_params(&g, net.params());
    if let Some((name, _)) = net
        .params()
        .iter()
        .map(|(_, n, _)| n)
        .zip(&grads)
        .find(|(_, t)| !t.all_finite())
    {
        return Err(Error::Numeric(format!("non-finite gradient for {name} (loss {value})")));
    }
    Ok((value, grads))
}

fn save_snapshot(dir: &Path, net: &Net<f32>, opt: &AdamW<f32>, meta: CheckpointMeta, report: &NanReport) -> Result<()> {
    Checkpoint::from_net(net, Some(opt), meta).save(dir.join(format!("{NAN_SNAPSHOT}.ckpt")))?;
    let p = dir.join(format!("{NAN_SNAPSHOT}.json"));
    std::fs::write(&p, serde_json::to_vec_pretty(report)?).map_err(|e| Error::io(&p, e))
}

/// Trains with AdamW on the WSS-L1 loss, without augmentation. Iteration `k`
/// uses the learning rate `lr_at(k, total)` and batches drawn from a shuffle
/// seeded by `(cfg.seed, epoch)`, so a resumed run continues exactly where
/// the interrupted one would have gone.
pub fn train(manifest: &TripletManifest, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(Error::Data("training manifest is empty".into()));
    }
    manifest.check_unique_ids()?;
    let fingerprint = cfg.fingerprint();
    let steps_per_epoch = manifest.len().div_ceil(cfg.batch_size) as u64;
    let total = cfg.epochs as u64 * steps_per_epoch;
    let dir = &opts.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (mut net, mut opt, mut meta) = match &opts.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let stored = ckpt.meta().config_fingerprint.as_deref();
            if stored != Some(fingerprint.as_str()) {
                return Err(Error::Checkpoint(format!(
                    "{} was written under config {}, current config is {fingerprint}",
                    path.display(),
                    stored.unwrap_or("(none)")
                )));
            }
            let net: Net<f32> = ckpt.net_checked(cfg.ablation)?;
            let opt = ckpt
                .optimizer()
                .ok_or_else(|| Error::Checkpoint(format!("{} has no optimizer state", path.display())))?;
            (net, opt, ckpt.meta().clone())
        }
        None => {
            let net: Net<f32> = Net::new(cfg.model_config(), cfg.seed)?;
            let opt = AdamW::new(cfg.optimizer, net.params());
            let meta = CheckpointMeta {
                config_fingerprint: Some(fingerprint.clone()),
                train_config: Some(cfg.canonical()),
                ..CheckpointMeta::default()
            };
            (net, opt, meta)
        }
    };
    let stop = opts.stop_after.unwrap_or(total).min(total);
    log::info!(
        "training {} ({} samples, {steps_per_epoch} steps/epoch, {total} iterations, config {fingerprint})",
        cfg.ablation,
        manifest.len()
    );

    let mut skipped: Vec<String> = Vec::new();
    let best_path = dir.join(BEST_CHECKPOINT);
    let mut order: Vec<&Triplet> = Vec::new();
    let mut order_epoch = None;
    while meta.iteration < stop {
        let k = meta.iteration;
        let epoch = k / steps_per_epoch;
        if order_epoch != Some(epoch) {
            order = manifest.entries.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(epoch);
            order.shuffle(&mut rng);
            order_epoch = Some(epoch);
        }
        let step = (k % steps_per_epoch) as usize;
        let chunk = &order[step * cfg.batch_size..((step + 1) * cfg.batch_size).min(order.len())];
        let lr = lr_at(k, total, cfg)?;
        let batch = load_batch(&net, chunk, &mut skipped)?;
        match batch {
            None => log::warn!("iteration {k}: every sample in the batch was skipped"),
            Some(batch) => match loss_and_grads(&net, &batch, cfg) {
                Ok((loss, grads)) => {
                    opt.update(net.params_mut(), &grads, lr)?;
                    meta.loss_history.push((k, loss));
                    log::debug!("iteration {k}: loss {loss:.6e} lr {lr:.3e}");
                }
                Err(Error::Numeric(message)) => {
                    let report = NanReport {
                        iteration: k,
                        learning_rate: lr,
                        samples: &batch.ids,
                        message: message.clone(),
                    };
                    save_snapshot(dir, &net, &opt, meta.clone(), &report)?;
                    return Err(Error::Numeric(format!(
                        "iteration {k}: {message}; snapshot written to {}",
                        dir.join(format!("{NAN_SNAPSHOT}.ckpt")).display()
                    )));
                }
                Err(e) => return Err(e),
            },
        }
        meta.iteration = k + 1;

        if cfg.checkpoint_every > 0 && meta.iteration % cfg.checkpoint_every == 0 {
            Checkpoint::from_net(&net, Some(&opt), meta.clone()).save(dir.join(LAST_CHECKPOINT))?;
        }
        let epoch_done = meta.iteration % steps_per_epoch == 0;
        if let (true, Some(val)) = (epoch_done && cfg.validate_every > 0, &opts.validation) {
            if (meta.iteration / steps_per_epoch).is_multiple_of(cfg.validate_every as u64) {
                let report = evaluate_net(val, &net, "validation".into())?;
                let score = report.overall.mean.map(|m| m.ws_psnr);
                log::info!(
                    "epoch {}: validation WS-PSNR {score:?}",
                    meta.iteration / steps_per_epoch
                );
                if let Some(s) = score.filter(|s| meta.best_ws_psnr.is_none_or(|b| *s > b)) {
                    meta.best_ws_psnr = Some(s);
                    Checkpoint::from_net(&net, Some(&opt), meta.clone()).save(&best_path)?;
                }
            }
        }
    }
    Checkpoint::from_net(&net, Some(&opt), meta.clone()).save(dir.join(LAST_CHECKPOINT))?;
    skipped.sort();
    skipped.dedup();
    Ok(TrainOutcome {
        fingerprint,
        iterations: meta.iteration,
        total_iterations: total,
        loss_history: meta.loss_history,
        skipped,
        last_checkpoint: dir.join(LAST_CHECKPOINT),
        best_checkpoint: (meta.best_ws_psnr.is_some() && best_path.is_file()).then_some(best_path),
        best_ws_psnr: meta.best_ws_psnr,
    })
}
