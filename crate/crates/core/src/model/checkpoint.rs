//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, little-endian
//! `u64` header length, a JSON [`CheckpointHeader`], then every tensor listed
//! in the header as little-endian `f64` values in header order. Optimizer
//! moments, when present, follow the weights in the same order (first
//! moments, then second moments).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Ablation, ModelConfig, Net};
use crate::error::{Error, Result};
use crate::nn::{AdamW, AdamWConfig, ParamStore, Real, Tensor};

const MAGIC: &[u8; 8] = b"OVFICKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub config: AdamWConfig,
    pub step: u64,
}

/// Training bookkeeping stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed optimizer iterations.
    pub iteration: u64,
    pub config_fingerprint: Option<String>,
    /// Best validation WS-PSNR seen so far.
    pub best_ws_psnr: Option<f64>,
    /// `(iteration, loss)` for every completed optimizer step.
    pub loss_history: Vec<(u64, f64)>,
    /// Canonical text of the training configuration.
    pub train_config: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    pub meta: CheckpointMeta,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    weights: Vec<Tensor<f64>>,
    moments: Option<(Vec<Tensor<f64>>, Vec<Tensor<f64>>)>,
}

impl Checkpoint {
    pub fn from_net<T: Real>(net: &Net<T>, optimizer: Option<&AdamW<T>>, meta: CheckpointMeta) -> Self {
        let tensors = net
            .params()
            .iter()
            .map(|(_, name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape(),
            })
            .collect();
        let weights = net.params().iter().map(|(_, _, t)| t.cast()).collect();
        let moments = optimizer.map(|o| {
            (
                o.first_moment.iter().map(|t| t.cast()).collect(),
                o.second_moment.iter().map(|t| t.cast()).collect(),
            )
        });
        Checkpoint {
            header: CheckpointHeader {
                version: FORMAT_VERSION,
                model: net.config().clone(),
                meta,
                tensors,
                optimizer: optimizer.map(|o| OptimizerEntry {
                    config: o.config,
                    step: o.step,
                }),
            },
            weights,
            moments,
        }
    }

    pub fn ablation(&self) -> Ablation {
        self.header.model.ablation
    }

    pub fn meta(&self) -> &CheckpointMeta {
        &self.header.meta
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&self.header)?;
        let mut buf = Vec::with_capacity(header.len() + 20 + 8 * self.value_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        let moments = self.moments.iter().flat_map(|(m, v)| m.iter().chain(v));
        for t in self.weights.iter().chain(moments) {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn value_count(&self) -> usize {
        let w: usize = self.weights.iter().map(|t| t.len()).sum();
        if self.moments.is_some() {
            3 * w
        } else {
            w
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
        let mut values = body[hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |entries: &[TensorEntry]| -> Result<Vec<Tensor<f64>>> {
            entries
                .iter()
                .map(|e| {
                    let n: usize = e.shape.iter().product();
                    let data: Vec<f64> = values.by_ref().take(n).collect();
                    if data.len() != n {
                        return Err(bad(&format!("truncated data for {}", e.name)));
                    }
                    Tensor::from_vec(e.shape, data)
                })
                .collect()
        };
        let weights = take(&header.tensors)?;
        let moments = match header.optimizer {
            Some(_) => Some((take(&header.tensors)?, take(&header.tensors)?)),
            None => None,
        };
        if values.next().is_some() || !(body.len() - hlen).is_multiple_of(8) {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            header,
            weights,
            moments,
        })
    }

    /// Rebuilds the network, refusing when its flags differ from `expected`.
    pub fn net_checked<T: Real>(&self, expected: Ablation) -> Result<Net<T>> {
        if self.ablation() != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained as {} (guard={}, ftb={}), requested {} (guard={}, ftb={})",
                self.ablation(),
                self.ablation().guard,
                self.ablation().ftb,
                expected,
                expected.guard,
                expected.ftb
            )));
        }
        self.net()
    }

    /// Rebuilds the network described by the header.
    pub fn net<T: Real>(&self) -> Result<Net<T>> {
        let mut net = Net::<T>::new(self.header.model.clone(), 0)?;
        let expected: Vec<&str> = net.params().iter().map(|(_, n, _)| n).collect();
        let stored: Vec<&str> = self.header.tensors.iter().map(|e| e.name.as_str()).collect();
        if expected != stored {
            return Err(Error::Checkpoint(
                "stored tensor names do not match the network layout".into(),
            ));
        }
        let names: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        let store: &mut ParamStore<T> = net.params_mut();
        for (name, t) in names.iter().zip(&self.weights) {
            store.set(name, t.cast())?;
        }
        Ok(net)
    }

    /// Optimizer state, when the checkpoint carries one.
    pub fn optimizer<T: Real>(&self) -> Option<AdamW<T>> {
        let entry = self.header.optimizer.as_ref()?;
        let (m, v) = self.moments.as_ref()?;
        Some(AdamW {
            config: entry.config,
            step: entry.step,
            first_moment: m.iter().map(|t| t.cast()).collect(),
            second_moment: v.iter().map(|t| t.cast()).collect(),
        })
    }
}
