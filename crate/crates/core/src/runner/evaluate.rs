use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Setting, Triplet, TripletManifest};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::metrics::{evaluate_pair, MetricReport};
use crate::model::{Ablation, Checkpoint, Net};

/// Where predicted middle frames come from.
#[derive(Debug, Clone)]
pub enum PredictionSource {
    /// Run the network stored in a checkpoint.
    Checkpoint(PathBuf),
    /// Externally produced frames at `<dir>/<sample_id>.png`.
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub setting: Setting,
    pub motion_extent: Option<f64>,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    /// `None` for the row over all settings.
    pub setting: Option<Setting>,
    pub samples: usize,
    pub evaluated: usize,
    /// Absent when no sample of the setting could be evaluated.
    pub mean: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSample {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub source: String,
    pub config_fingerprint: Option<String>,
    pub ablation: Option<Ablation>,
    /// One block per setting present in the manifest, easiest first.
    pub settings: Vec<SettingSummary>,
    pub overall: SettingSummary,
    /// Sorted by sample id.
    pub rows: Vec<SampleRow>,
    pub missing: Vec<MissingSample>,
    pub wall_clock_seconds: f64,
}

fn mean_of(rows: &[&SampleRow]) -> Option<MetricReport> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let sum = |f: fn(&MetricReport) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    Some(MetricReport {
        psnr: sum(|m| m.psnr),
        ssim: sum(|m| m.ssim),
        ws_psnr: sum(|m| m.ws_psnr),
        ws_ssim: sum(|m| m.ws_ssim),
    })
}

impl BenchmarkReport {
    fn assemble(
        manifest: &TripletManifest,
        source: String,
        mut rows: Vec<SampleRow>,
        mut missing: Vec<MissingSample>,
        started: Instant,
    ) -> BenchmarkReport {
        rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        missing.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let counts = manifest.counts();
        let settings = Setting::ALL
            .iter()
            .filter(|s| counts.get(**s) > 0)
            .map(|&s| {
                let of: Vec<&SampleRow> = rows.iter().filter(|r| r.setting == s).collect();
                SettingSummary {
                    setting: Some(s),
                    samples: counts.get(s),
                    evaluated: of.len(),
                    mean: mean_of(&of),
                }
            })
            .collect();
        let all: Vec<&SampleRow> = rows.iter().collect();
        let overall = SettingSummary {
            setting: None,
            samples: manifest.len(),
            evaluated: rows.len(),
            mean: mean_of(&all),
        };
        BenchmarkReport {
            source,
            config_fingerprint: None,
            ablation: None,
            settings,
            overall,
            rows,
            missing,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn setting(&self, s: Setting) -> Option<&SettingSummary> {
        self.settings.iter().find(|b| b.setting == Some(s))
    }

    /// Per-setting table: one line per setting block, then `all`.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["setting", "samples", "evaluated", "psnr", "ssim", "ws_psnr", "ws_ssim"])?;
        for s in self.settings.iter().chain(std::iter::once(&self.overall)) {
            let label = s.setting.map_or("all", Setting::label).to_string();
            let m = s.mean.map_or_else(
                || vec![String::new(); 4],
                |m| {
                    [m.psnr, m.ssim, m.ws_psnr, m.ws_ssim]
                        .iter()
                        .map(f64::to_string)
                        .collect()
                },
            );
            let mut rec = vec![label, s.samples.to_string(), s.evaluated.to_string()];
            rec.extend(m);
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }

    /// One line per evaluated sample, then one per missing sample.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "sample_id",
            "setting",
            "motion_extent",
            "psnr",
            "ssim",
            "ws_psnr",
            "ws_ssim",
            "status",
        ])?;
        for r in &self.rows {
            let m = r.metrics;
            w.write_record([
                r.sample_id.clone(),
                r.setting.label().to_string(),
                r.motion_extent.map_or(String::new(), |e| e.to_string()),
                m.psnr.to_string(),
                m.ssim.to_string(),
                m.ws_psnr.to_string(),
                m.ws_ssim.to_string(),
                "ok".to_string(),
            ])?;
        }
        for m in &self.missing {
            w.write_record([m.sample_id.as_str(), "", "", "", "", "", "", "missing"])?;
        }
        finish_csv(w)
    }

    /// Writes `<stem>.summary.csv`, `<stem>.samples.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        put(format!("{stem}.summary.csv"), self.summary_csv()?.as_bytes())?;
        put(format!("{stem}.samples.csv"), self.rows_csv()?.as_bytes())?;
        put(format!("{stem}.json"), &serde_json::to_vec_pretty(self)?)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

/// Loads the three frames of a triplet, checking they agree in size.
pub fn load_sample(t: &Triplet) -> Result<(Frame, Frame, Frame)> {
    let load = |p: &Path| Frame::load(p).map_err(|e| pipeline(t, e));
    let (a, g, b) = (load(&t.i1)?, load(&t.ig)?, load(&t.i2)?);
    a.check_same_shape(&g).map_err(|e| pipeline(t, e))?;
    a.check_same_shape(&b).map_err(|e| pipeline(t, e))?;
    Ok((a, g, b))
}

fn pipeline(t: &Triplet, e: Error) -> Error {
    Error::Pipeline {
        sample_id: t.sample_id.clone(),
        message: e.to_string(),
    }
}

/// Scores predictions from `predict` against the ground-truth middle frames.
/// `predict` returns `Ok(None)` or `Err` for a sample it cannot produce; such
/// samples are reported as missing and left out of every mean.
pub(crate) fn evaluate_with(
    manifest: &TripletManifest,
    source: String,
    mut predict: impl FnMut(&Triplet, &Frame, &Frame) -> Result<Option<Frame>>,
) -> Result<BenchmarkReport> {
    let started = Instant::now();
    let mut entries: Vec<&Triplet> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for t in entries {
        let setting = t.setting()?;
        let (i1, gt, i2) = load_sample(t)?;
        let outcome = predict(t, &i1, &i2).and_then(|p| match p {
            Some(p) if !p.same_shape(&gt) => Err(Error::Shape(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                p.height(),
                p.width(),
                gt.height(),
                gt.width()
            ))),
            other => Ok(other),
        });
        match outcome {
            Ok(Some(pred)) => rows.push(SampleRow {
                sample_id: t.sample_id.clone(),
                setting,
                motion_extent: t.motion_extent,
                metrics: evaluate_pair(&pred, &gt)?,
            }),
            Ok(None) => missing.push(MissingSample {
                sample_id: t.sample_id.clone(),
                reason: "no prediction".into(),
            }),
            Err(e) => {
                log::warn!("{}: {e}", t.sample_id);
                missing.push(MissingSample {
                    sample_id: t.sample_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(BenchmarkReport::assemble(manifest, source, rows, missing, started))
}

pub(crate) fn evaluate_net(manifest: &TripletManifest, net: &Net<f32>, source: String) -> Result<BenchmarkReport> {
    evaluate_with(manifest, source, |_, a, b| net.interpolate(a, b).map(Some))
}

/// Per-setting benchmark of `manifest`. Every entry must be stratified.
pub fn evaluate(manifest: &TripletManifest, source: &PredictionSource) -> Result<BenchmarkReport> {
    match source {
        PredictionSource::Checkpoint(path) => {
            let ckpt = Checkpoint::load(path)?;
            let net: Net<f32> = ckpt.net()?;
            let mut report = evaluate_net(manifest, &net, format!("checkpoint:{}", path.display()))?;
            report.config_fingerprint = ckpt.meta().config_fingerprint.clone();
            report.ablation = Some(ckpt.ablation());
            Ok(report)
        }
        PredictionSource::Directory(dir) => {
            evaluate_with(manifest, format!("directory:{}", dir.display()), |t, _, _| {
                let p = dir.join(format!("{}.png", t.sample_id));
                if p.is_file() {
                    Frame::load(&p).map(Some)
                } else {
                    Ok(None)
                }
            })
        }
    }
}
