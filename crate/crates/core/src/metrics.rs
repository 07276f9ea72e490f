//! Fidelity metrics: PSNR, SSIM and their latitude-weighted variants.
//!
//! All metrics work on `[0, 1]` frames. The weighted variants use a
//! [`WeightMap`], which for ERP content is the analytic condition map
//! broadcast to the frame size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};
use crate::geometry::condition_map;

/// Returned instead of +inf when the error is zero.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const PEAK: f64 = 1.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Per-pixel weights shared across color channels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl WeightMap {
    /// ERP spherical-area weights for a frame of the given size.
    pub fn analytic(height: usize, width: usize) -> Result<Self> {
        let c = condition_map(height, width)?;
        Ok(WeightMap {
            height,
            width,
            values: c.to_dense(),
        })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        WeightMap {
            height,
            width,
            values: vec![1.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "weight map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Argument(format!(
                "weights must be positive and finite, found {bad}"
            )));
        }
        Ok(WeightMap { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub(crate) fn check_frame(&self, frame: &Frame) -> Result<()> {
        if self.height != frame.height() || self.width != frame.width() {
            return Err(Error::Shape(format!(
                "weight map {}x{} does not match frame {}x{}",
                self.height,
                self.width,
                frame.height(),
                frame.width()
            )));
        }
        Ok(())
    }
}

/// The four numbers reported per evaluated frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub ws_psnr: f64,
    pub ws_ssim: f64,
}

fn mse_to_psnr(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

fn check_peak(peak: f64) -> Result<()> {
    if peak > 0.0 && peak.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("peak must be positive, got {peak}")))
    }
}

pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    check_peak(peak)?;
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(mse_to_psnr(sq / a.data().len() as f64, peak))
}

/// PSNR where each pixel's squared error is weighted by `w`.
pub fn ws_psnr(a: &Frame, b: &Frame, w: &WeightMap, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    w.check_frame(a)?;
    check_peak(peak)?;
    let n = a.height() * a.width();
    let mut weighted = 0.0;
    for c in 0..CHANNELS {
        let (pa, pb) = (a.plane(c), b.plane(c));
        weighted += pa
            .iter()
            .zip(pb)
            .zip(w.values())
            .map(|((x, y), wt)| wt * (x - y) * (x - y))
            .sum::<f64>();
    }
    let total_weight: f64 = w.values().iter().sum::<f64>() * CHANNELS as f64;
    debug_assert_eq!(w.values().len(), n);
    Ok(mse_to_psnr(weighted / total_weight, peak))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Valid-mode separable Gaussian filter of one plane.
fn filter_valid(plane: &[f64], height: usize, width: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; height * ow];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Local SSIM values for one channel, `(H - 10) x (W - 10)` windows.
fn ssim_map_plane(a: &[f64], b: &[f64], height: usize, width: usize) -> Vec<f64> {
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, height, width, &taps);
    let mu_b = filter_valid(b, height, width, &taps);
    let e_aa = filter_valid(&aa, height, width, &taps);
    let e_bb = filter_valid(&bb, height, width, &taps);
    let e_ab = filter_valid(&ab, height, width, &taps);
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .collect()
}

fn check_window(a: &Frame) -> Result<()> {
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "frame {}x{} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            a.height(),
            a.width()
        )));
    }
    Ok(())
}

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5, valid windows only),
/// averaged over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_shape(b)?;
    check_window(a)?;
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let map = ssim_map_plane(a.plane(c), b.plane(c), a.height(), a.width());
        total += map.iter().sum::<f64>() / map.len() as f64;
    }
    Ok(total / CHANNELS as f64)
}

/// Weighted mean of the local SSIM map; each window is weighted by `w` at its
/// center pixel.
pub fn ws_ssim(a: &Frame, b: &Frame, w: &WeightMap) -> Result<f64> {
    a.check_same_shape(b)?;
    w.check_frame(a)?;
    check_window(a)?;
    let half = SSIM_WINDOW / 2;
    let ow = a.width() - SSIM_WINDOW + 1;
    let oh = a.height() - SSIM_WINDOW + 1;
    let mut center_weights = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            center_weights.push(w.get(y + half, x + half));
        }
    }
    let weight_sum: f64 = center_weights.iter().sum();
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let map = ssim_map_plane(a.plane(c), b.plane(c), a.height(), a.width());
        total += map.iter().zip(&center_weights).map(|(s, wt)| s * wt).sum::<f64>() / weight_sum;
    }
    Ok(total / CHANNELS as f64)
}

/// All four metrics for a predicted frame against ground truth, using the
/// analytic ERP weights for the frame size.
pub fn evaluate_pair(pred: &Frame, gt: &Frame) -> Result<MetricReport> {
    pred.check_same_shape(gt)?;
    let w = WeightMap::analytic(gt.height(), gt.width())?;
    Ok(MetricReport {
        psnr: psnr(pred, gt, PEAK)?,
        ssim: ssim(pred, gt)?,
        ws_psnr: ws_psnr(pred, gt, &w, PEAK)?,
        ws_ssim: ws_ssim(pred, gt, &w)?,
    })
}
