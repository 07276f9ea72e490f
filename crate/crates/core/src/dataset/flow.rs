use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Dense displacement field in pixels. `(dx, dy)` at a pixel of the first
/// frame points to the matching location in the second frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        if dx.len() != height * width || dy.len() != height * width {
            return Err(Error::Shape(format!("flow components do not match {height}x{width}")));
        }
        Ok(FlowField { height, width, dx, dy })
    }

    pub fn uniform(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        FlowField {
            height,
            width,
            dx: vec![dx; height * width],
            dy: vec![dy; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }
}

/// How per-pixel latitude motion is reduced to one extent per triplet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtentStatistic {
    #[default]
    Mean,
    Max,
}

impl ExtentStatistic {
    pub fn reduce(self, flow: &FlowField) -> f64 {
        let abs = flow.dy.iter().map(|v| v.abs());
        match self {
            ExtentStatistic::Mean => abs.sum::<f64>() / flow.dy.len().max(1) as f64,
            ExtentStatistic::Max => abs.fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for ExtentStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtentStatistic::Mean => "mean",
            ExtentStatistic::Max => "max",
        })
    }
}

impl FromStr for ExtentStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ExtentStatistic::Mean),
            "max" => Ok(ExtentStatistic::Max),
            _ => Err(Error::Config(format!("unknown extent statistic {s:?}"))),
        }
    }
}

/// Optical flow estimator. Implementations must be deterministic.
pub trait FlowProvider {
    fn name(&self) -> &str;
    fn estimate(&self, i1: &Frame, i2: &Frame) -> Result<FlowField>;
}

/// Mean (or max) absolute vertical flow between two frames.
pub fn motion_extent(
    sample_id: &str,
    i1: &Frame,
    i2: &Frame,
    provider: &dyn FlowProvider,
    statistic: ExtentStatistic,
) -> Result<f64> {
    i1.check_same_shape(i2)?;
    let flow = provider.estimate(i1, i2).map_err(|e| Error::Pipeline {
        sample_id: sample_id.to_string(),
        message: format!("{} flow failed: {e}", provider.name()),
    })?;
    if flow.height != i1.height() || flow.width != i1.width() {
        return Err(Error::Pipeline {
            sample_id: sample_id.to_string(),
            message: format!("{} returned a {}x{} field", provider.name(), flow.height, flow.width),
        });
    }
    Ok(statistic.reduce(&flow))
}

/// Known uniform motion, for synthetic clips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleFlow {
    pub dx: f64,
    pub dy: f64,
}

impl OracleFlow {
    pub fn uniform(dx: f64, dy: f64) -> Self {
        OracleFlow { dx, dy }
    }
}

impl FlowProvider for OracleFlow {
    fn name(&self) -> &str {
        "oracle"
    }

    fn estimate(&self, i1: &Frame, _i2: &Frame) -> Result<FlowField> {
        if !(self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::Numeric("oracle motion is not finite".into()));
        }
        Ok(FlowField::uniform(i1.height(), i1.width(), self.dx, self.dy))
    }
}

/// Coarse-to-fine block matching on luma with horizontal wraparound.
///
/// Each level halves resolution by 2x2 averaging. Blocks are matched by mean
/// absolute difference inside a square search window around the upsampled
/// coarser estimate; rows that fall outside the frame are ignored. The finest
/// level adds a parabolic sub-pixel refinement. Flow is constant per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMatchingFlow {
    pub block: usize,
    pub radius: usize,
    pub levels: usize,
}

impl Default for BlockMatchingFlow {
    fn default() -> Self {
        BlockMatchingFlow {
            block: 8,
            radius: 3,
            levels: 3,
        }
    }
}

struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn half(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let s = self.v[2 * y * self.w + 2 * x]
                    + self.v[2 * y * self.w + 2 * x + 1]
                    + self.v[(2 * y + 1) * self.w + 2 * x]
                    + self.v[(2 * y + 1) * self.w + 2 * x + 1];
                v.push(0.25 * s);
            }
        }
        Plane { h, w, v }
    }
}

impl BlockMatchingFlow {
    /// Mean absolute difference of the block at `(y0, x0)` displaced by
    /// `(dx, dy)`, or `None` when fewer than half its pixels stay inside.
    #[allow(clippy::too_many_arguments)]
    fn cost(&self, a: &Plane, b: &Plane, y0: usize, x0: usize, bh: usize, bw: usize, dx: i64, dy: i64) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in y0..y0 + bh {
            let ty = y as i64 + dy;
            if ty < 0 || ty >= b.h as i64 {
                continue;
            }
            let row_a = &a.v[y * a.w..(y + 1) * a.w];
            let row_b = &b.v[ty as usize * b.w..(ty as usize + 1) * b.w];
            for x in x0..x0 + bw {
                let tx = (x as i64 + dx).rem_euclid(b.w as i64) as usize;
                sum += (row_a[x] - row_b[tx]).abs();
                n += 1;
            }
        }
        (2 * n >= bh * bw).then(|| sum / n as f64)
    }

    fn match_level(
        &self,
        a: &Plane,
        b: &Plane,
        prior: &dyn Fn(usize, usize) -> (i64, i64),
        subpixel: bool,
    ) -> Vec<(f64, f64)> {
        let bs = self.block.min(a.h).min(a.w).max(1);
        let (ny, nx) = (a.h.div_ceil(bs), a.w.div_ceil(bs));
        let r = self.radius as i64;
        let mut out = Vec::with_capacity(ny * nx);
        for by in 0..ny {
            for bx in 0..nx {
                let (y0, x0) = (by * bs, bx * bs);
                let (bh, bw) = (bs.min(a.h - y0), bs.min(a.w - x0));
                let (px, py) = prior(y0 + bh / 2, x0 + bw / 2);
                let mut best: Option<(f64, i64, i64)> = None;
                for dy in py - r..=py + r {
                    for dx in px - r..=px + r {
                        let Some(c) = self.cost(a, b, y0, x0, bh, bw, dx, dy) else {
                            continue;
                        };
                        // Ties go to the smaller displacement, then scan order.
                        let better = match best {
                            None => true,
                            Some((bc, bdx, bdy)) => c < bc || (c == bc && dx.abs() + dy.abs() < bdx.abs() + bdy.abs()),
                        };
                        if better {
                            best = Some((c, dx, dy));
                        }
                    }
                }
                let (c0, dx, dy) = best.unwrap_or((0.0, px, py));
                let (mut fx, mut fy) = (dx as f64, dy as f64);
                // An exact match needs no refinement.
                if subpixel && best.is_some() && c0 > 1e-12 {
                    let refine = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
                        (Some(l), Some(h)) => {
                            let denom = l - 2.0 * c0 + h;
                            if denom > 1e-12 {
                                (0.5 * (l - h) / denom).clamp(-0.5, 0.5)
                            } else {
                                0.0
                            }
                        }
                        _ => 0.0,
                    };
                    fx += refine(
                        self.cost(a, b, y0, x0, bh, bw, dx - 1, dy),
                        self.cost(a, b, y0, x0, bh, bw, dx + 1, dy),
                    );
                    fy += refine(
                        self.cost(a, b, y0, x0, bh, bw, dx, dy - 1),
                        self.cost(a, b, y0, x0, bh, bw, dx, dy + 1),
                    );
                }
                out.push((fx, fy));
            }
        }
        out
    }
}

impl FlowProvider for BlockMatchingFlow {
    fn name(&self) -> &str {
        "block-matching"
    }

    fn estimate(&self, i1: &Frame, i2: &Frame) -> Result<FlowField> {
        i1.check_same_shape(i2)?;
        if self.block == 0 || self.levels == 0 {
            return Err(Error::Config(
                "block matching needs a positive block size and level count".into(),
            ));
        }
        let (h, w) = (i1.height(), i1.width());
        let mut pa = vec![Plane { h, w, v: i1.luma() }];
        let mut pb = vec![Plane { h, w, v: i2.luma() }];
        while pa.len() < self.levels {
            let top = pa.last().expect("non-empty");
            if top.h % 2 != 0 || top.w % 2 != 0 || top.h / 2 < 2 * self.block || top.w / 2 < 2 * self.block {
                break;
            }
            let (na, nb) = (top.half(), pb.last().expect("non-empty").half());
            pa.push(na);
            pb.push(nb);
        }
        // Block estimates of the coarser level and its geometry.
        let mut coarse: Option<(Vec<(f64, f64)>, usize, usize)> = None;
        for lvl in (0..pa.len()).rev() {
            let (a, b) = (&pa[lvl], &pb[lvl]);
            let prior = |y: usize, x: usize| -> (i64, i64) {
                match &coarse {
                    None => (0, 0),
                    Some((est, bs, nx)) => {
                        let (cy, cx) = (y / 2 / bs, x / 2 / bs);
                        let (fx, fy) = est[cy.min(est.len() / nx - 1) * nx + cx.min(nx - 1)];
                        ((2.0 * fx).round() as i64, (2.0 * fy).round() as i64)
                    }
                }
            };
            let est = self.match_level(a, b, &prior, lvl == 0);
            let bs = self.block.min(a.h).min(a.w).max(1);
            coarse = Some((est, bs, a.w.div_ceil(bs)));
        }
        let (est, bs, nx) = coarse.expect("at least one level");
        let mut dx = Vec::with_capacity(h * w);
        let mut dy = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = est[(y / bs) * nx + x / bs];
                dx.push(fx);
                dy.push(fy);
            }
        }
        FlowField::new(h, w, dx, dy)
    }
}
