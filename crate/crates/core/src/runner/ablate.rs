use std::path::{Path, PathBuf};

use serde::Serialize;

use super::evaluate::{evaluate, BenchmarkReport, PredictionSource};
use super::train::{train, TrainOptions};
use super::TrainConfig;
use crate::dataset::TripletManifest;
use crate::error::{Error, Result};
use crate::model::{Ablation, Net};

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub config_fingerprint: String,
    pub parameter_count: usize,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<BenchmarkReport>,
    /// Set when training or evaluation of this variant failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationOutcome {
    /// Fingerprint of the shared config, ablation flags excluded.
    pub base_fingerprint: String,
    /// Both-off, guard-only, ftb-only, both-on.
    pub rows: Vec<AblationRow>,
}

impl AblationOutcome {
    pub fn failed(&self) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// One line per variant with the overall means.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant",
            "guard",
            "ftb",
            "parameters",
            "psnr",
            "ssim",
            "ws_psnr",
            "ws_ssim",
            "status",
        ])?;
        for r in &self.rows {
            let mean = r.report.as_ref().and_then(|rep| rep.overall.mean);
            let m = mean.map_or_else(
                || vec![String::new(); 4],
                |m| {
                    [m.psnr, m.ssim, m.ws_psnr, m.ws_ssim]
                        .iter()
                        .map(f64::to_string)
                        .collect()
                },
            );
            let mut rec = vec![
                r.ablation.label().to_string(),
                r.ablation.guard.to_string(),
                r.ablation.ftb.to_string(),
                r.parameter_count.to_string(),
            ];
            rec.extend(m);
            rec.push(r.error.as_ref().map_or("ok".to_string(), |e| format!("failed: {e}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Writes `ablation.csv` and `ablation.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("ablation.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("ablation.json");
        std::fs::write(&json_path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&json_path, e))
    }
}

/// Trains each of the four variants on `train_set` with `base` (only the
/// ablation flags change), then evaluates it on `test_set`. A failing variant
/// is recorded in its row and the remaining variants still run. Each variant
/// writes to `<out_dir>/<label>/`.
pub fn ablate(
    train_set: &TripletManifest,
    test_set: &TripletManifest,
    base: &TrainConfig,
    out_dir: &Path,
) -> Result<AblationOutcome> {
    base.validate()?;
    let mut rows = Vec::with_capacity(4);
    for ablation in Ablation::ALL {
        let cfg = TrainConfig {
            ablation,
            ..base.clone()
        };
        let opts = TrainOptions {
            out_dir: out_dir.join(ablation.label()),
            ..TrainOptions::default()
        };
        let result = train(train_set, &cfg, &opts).and_then(|outcome| {
            let report = evaluate(test_set, &PredictionSource::Checkpoint(outcome.last_checkpoint.clone()))?;
            Ok((outcome.last_checkpoint, report))
        });
        let mut row = AblationRow {
            ablation,
            config_fingerprint: cfg.fingerprint(),
            parameter_count: Net::<f32>::new(cfg.model_config(), 0)?.parameter_count(),
            checkpoint: None,
            report: None,
            error: None,
        };
        match result {
            Ok((ckpt, report)) => {
                row.checkpoint = Some(ckpt);
                row.report = Some(report);
            }
            Err(e) => {
                log::error!("variant {ablation} failed: {e}");
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    Ok(AblationOutcome {
        base_fingerprint: base.base_fingerprint(),
        rows,
    })
}
