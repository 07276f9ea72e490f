//! Training, evaluation and ablation drivers.

mod ablate;
mod evaluate;
mod train;

pub use ablate::{ablate, AblationOutcome, AblationRow};
pub use evaluate::{evaluate, load_sample, BenchmarkReport, PredictionSource, SampleRow, SettingSummary};
pub use train::{train, TrainOptions, TrainOutcome};

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::loss::WssL1Config;
use crate::model::{Ablation, ModelConfig};
use crate::nn::AdamWConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cosine")
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Schedule::Cosine),
            _ => Err(Error::Config(format!("unknown schedule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub ablation: Ablation,
    pub loss: WssL1Config,
    pub optimizer: AdamWConfig,
    /// Encoder channels per level, finest first.
    pub channels: Vec<usize>,
    /// Save `last.ckpt` every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
    /// Evaluate on the validation manifest every this many epochs (0: never).
    pub validate_every: usize,
}

const KEYS: &[&str] = &[
    "train.epochs",
    "train.batch_size",
    "train.lr_init",
    "train.lr_final",
    "train.schedule",
    "train.seed",
    "train.checkpoint_every",
    "train.validate_every",
    "model.guard",
    "model.ftb",
    "model.channels",
    "loss.huber_delta",
    "loss.reduction",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.weight_decay",
];

impl TrainConfig {
    /// 300 epochs, batch 8, cosine decay from 1e-4 to 1e-5.
    pub fn full() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 8,
            lr_init: 1e-4,
            lr_final: 1e-5,
            schedule: Schedule::Cosine,
            seed: 0,
            ablation: Ablation::BOTH_ON,
            loss: WssL1Config::default(),
            optimizer: AdamWConfig::default(),
            channels: ModelConfig::default().channels,
            checkpoint_every: 1000,
            validate_every: 10,
        }
    }

    /// Desk-scale profile for 4 triplets at 64x128: 200 full-batch
    /// iterations with a larger learning rate than the full profile.
    pub fn toy() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            lr_init: 1e-3,
            lr_final: 1e-4,
            checkpoint_every: 0,
            validate_every: 0,
            ..Self::full()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels.clone(),
            ablation: self.ablation,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr_final.is_finite()
            && self.lr_init.is_finite()
            && 0.0 <= self.lr_final
            && self.lr_final <= self.lr_init)
        {
            return Err(Error::Config(format!(
                "need 0 <= lr_final ({}) <= lr_init ({})",
                self.lr_final, self.lr_init
            )));
        }
        self.loss.validate()?;
        self.model_config().validate()
    }

    /// Overrides fields from `kv`. Unknown keys are rejected.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.reject_unknown(KEYS, &[])?;
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!("train.epochs", self.epochs);
        set!("train.batch_size", self.batch_size);
        set!("train.lr_init", self.lr_init);
        set!("train.lr_final", self.lr_final);
        set!("train.schedule", self.schedule);
        set!("train.seed", self.seed);
        set!("train.checkpoint_every", self.checkpoint_every);
        set!("train.validate_every", self.validate_every);
        set!("model.guard", self.ablation.guard);
        set!("model.ftb", self.ablation.ftb);
        set!("loss.huber_delta", self.loss.huber_delta);
        set!("loss.reduction", self.loss.reduction);
        set!("optim.beta1", self.optimizer.beta1);
        set!("optim.beta2", self.optimizer.beta2);
        set!("optim.eps", self.optimizer.eps);
        set!("optim.weight_decay", self.optimizer.weight_decay);
        if let Some(c) = kv.get("model.channels") {
            self.channels = c
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("model.channels={c}: {e}")))?;
        }
        self.validate()
    }

    /// Starts from `base` (the full or toy preset) and applies a config file.
    pub fn load(path: &Path, base: TrainConfig) -> Result<Self> {
        let mut cfg = base;
        cfg.apply(&KeyValues::load(path)?)?;
        Ok(cfg)
    }

    /// Every field as dotted keys. Floats use their shortest round-trip form.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("train.epochs", self.epochs);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.lr_init", self.lr_init);
        kv.set("train.lr_final", self.lr_final);
        kv.set("train.schedule", self.schedule);
        kv.set("train.seed", self.seed);
        kv.set("train.checkpoint_every", self.checkpoint_every);
        kv.set("train.validate_every", self.validate_every);
        kv.set("model.guard", self.ablation.guard);
        kv.set("model.ftb", self.ablation.ftb);
        kv.set(
            "model.channels",
            self.channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.set("loss.huber_delta", self.loss.huber_delta);
        kv.set("loss.reduction", self.loss.reduction);
        kv.set("optim.beta1", self.optimizer.beta1);
        kv.set("optim.beta2", self.optimizer.beta2);
        kv.set("optim.eps", self.optimizer.eps);
        kv.set("optim.weight_decay", self.optimizer.weight_decay);
        kv
    }

    pub fn canonical(&self) -> String {
        self.to_kv().to_string()
    }

    /// SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// Fingerprint with the ablation flags left out, shared by all variants
    /// of an ablation run.
    pub fn base_fingerprint(&self) -> String {
        let text: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("model.guard=") && !l.starts_with("model.ftb="))
            .map(|l| format!("{l}\n"))
            .collect();
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Learning rate at iteration `step` of `total_steps` under cosine decay.
pub fn lr_at(step: u64, total_steps: u64, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Argument(format!("step {step} outside 0..={total_steps}")));
    }
    let progress = step as f64 / total_steps as f64;
    Ok(match cfg.schedule {
        Schedule::Cosine => cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + (PI * progress).cos()),
    })
}
