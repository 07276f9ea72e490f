//! Latitude-weighted smooth-L1 training loss.
//!
//! Per element, with `d = gt - pred` and threshold `delta`:
//!
//! ```text
//! psi * 0.5 * d^2 / delta     if |d| < delta
//! psi * (|d| - 0.5 * delta)   otherwise
//! ```
//!
//! `psi` is the ERP weight map shared by the three color channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};
use crate::metrics::WeightMap;
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reduction::Mean),
            "sum" => Ok(Reduction::Sum),
            other => Err(Error::Config(format!("unknown reduction `{other}`"))),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WssL1Config {
    /// Switch point between the quadratic and linear branches.
    pub huber_delta: f64,
    pub reduction: Reduction,
}

impl Default for WssL1Config {
    fn default() -> Self {
        WssL1Config {
            huber_delta: 1.0,
            reduction: Reduction::Mean,
        }
    }
}

impl WssL1Config {
    pub fn validate(&self) -> Result<()> {
        if self.huber_delta > 0.0 && self.huber_delta.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss.huber_delta must be positive, got {}",
                self.huber_delta
            )))
        }
    }
}

/// Unweighted per-element value and its derivative with respect to `d`.
#[inline]
pub fn smooth_l1_term<T: Real>(d: T, delta: T) -> (T, T) {
    let half = T::of(0.5);
    if d.abs() < delta {
        (half * d * d / delta, d / delta)
    } else {
        (d.abs() - half * delta, d.signum())
    }
}

fn check_inputs(pred: &Frame, gt: &Frame, psi: &WeightMap, cfg: &WssL1Config) -> Result<()> {
    cfg.validate()?;
    pred.check_same_shape(gt)?;
    psi.check_frame(pred)
}

pub fn wss_l1(pred: &Frame, gt: &Frame, psi: &WeightMap, cfg: &WssL1Config) -> Result<f64> {
    check_inputs(pred, gt, psi, cfg)?;
    let mut total = 0.0;
    for c in 0..CHANNELS {
        for ((p, g), w) in pred.plane(c).iter().zip(gt.plane(c)).zip(psi.values()) {
            total += w * smooth_l1_term(g - p, cfg.huber_delta).0;
        }
    }
    Ok(match cfg.reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / pred.data().len() as f64,
    })
}

/// Gradient of [`wss_l1`] with respect to `pred`.
pub fn wss_l1_grad(pred: &Frame, gt: &Frame, psi: &WeightMap, cfg: &WssL1Config) -> Result<Frame> {
    check_inputs(pred, gt, psi, cfg)?;
    let scale = match cfg.reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / pred.data().len() as f64,
    };
    let plane_len = pred.height() * pred.width();
    let mut grad = Frame::filled(pred.height(), pred.width(), 0.0);
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        let d = gt.data()[i] - pred.data()[i];
        let w = psi.values()[i % plane_len];
        *g = -w * smooth_l1_term(d, cfg.huber_delta).1 * scale;
    }
    Ok(grad)
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(element index, analytic, numeric)` of the worst element.
    pub worst: Option<(usize, f64, f64)>,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} elements, max rel error {:.3e}", self.checked, self.max_rel_error)?;
        if let Some((i, a, n)) = self.worst {
            write!(f, " (element {i}: analytic {a:.6e}, numeric {n:.6e})")?;
        }
        Ok(())
    }
}

/// Relative error with a floor on the denominator so exact zeros compare.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Compares [`wss_l1_grad`] against central differences at a random point.
///
/// Residuals `d` are drawn from `[-3 delta, 3 delta]`, skipping values within
/// `1e-3 delta` of the kink at `|d| = delta` and below `0.05 delta` in
/// magnitude, where the gradient vanishes and only roundoff is left to compare.
/// The step is `1e-4 delta`; the loss is piecewise quadratic, so central
/// differences carry no truncation error away from the kink.
pub fn wss_l1_gradient_check(
    height: usize,
    width: usize,
    cfg: &WssL1Config,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let beta = cfg.huber_delta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = Frame::from_fn(height, width, |_, _, _| rng.gen::<f64>());
    let gt = Frame::from_fn(height, width, |c, y, x| loop {
        let d: f64 = rng.gen_range(-3.0 * beta..3.0 * beta);
        if (d.abs() - beta).abs() > 1e-3 * beta && d.abs() > 0.05 * beta {
            break pred.get(c, y, x) + d;
        }
    });
    let psi = WeightMap::analytic(height, width)?;
    let analytic = wss_l1_grad(&pred, &gt, &psi, cfg)?;
    let eps = 1e-4 * beta;
    let mut probe = pred.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for i in 0..pred.data().len() {
        let x0 = pred.data()[i];
        probe.data_mut()[i] = x0 + eps;
        let up = wss_l1(&probe, &gt, &psi, cfg)?;
        probe.data_mut()[i] = x0 - eps;
        let down = wss_l1(&probe, &gt, &psi, cfg)?;
        probe.data_mut()[i] = x0;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic.data()[i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = Some((i, analytic.data()[i], numeric));
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}
