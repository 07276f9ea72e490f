//! The interpolation network.
//!
//! Two weight-shared pyramid encoders turn each input frame into `L` feature
//! levels. Every encoder level is a stride-2 downsampling convolution
//! followed by a [DistortionGuard](Net::distortion_guard) block whose
//! deformable offsets are computed from the ERP condition map alone. A
//! coarse-to-fine decoder then refines bilateral flows from the missing middle
//! frame to both inputs. Its convolutions are modulated by per-pixel affine
//! transforms ([`dft_apply`]) that are also predicted from the condition map.
//! The midpoint frame is a mask blend of the two backward-warped inputs plus
//! a learned residual.

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointHeader, CheckpointMeta, TensorEntry};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};
use crate::geometry::condition_map;
use crate::nn::{fan_in_uniform, Graph, InputKind, Leaf, ParamId, ParamStore, Real, Tensor, Var};

/// Which of the two distortion-aware blocks are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub guard: bool,
    pub ftb: bool,
}

impl Ablation {
    pub const BOTH_OFF: Ablation = Ablation {
        guard: false,
        ftb: false,
    };
    pub const GUARD_ONLY: Ablation = Ablation {
        guard: true,
        ftb: false,
    };
    pub const FTB_ONLY: Ablation = Ablation {
        guard: false,
        ftb: true,
    };
    pub const BOTH_ON: Ablation = Ablation { guard: true, ftb: true };

    /// The four variants in ablation-table row order.
    pub const ALL: [Ablation; 4] = [Self::BOTH_OFF, Self::GUARD_ONLY, Self::FTB_ONLY, Self::BOTH_ON];

    pub fn label(self) -> &'static str {
        match (self.guard, self.ftb) {
            (false, false) => "both-off",
            (true, false) => "guard-only",
            (false, true) => "ftb-only",
            (true, true) => "both-on",
        }
    }

    pub fn uses_condition(self) -> bool {
        self.guard || self.ftb
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Self::BOTH_ON
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Encoder channels per level, finest first. Its length is the pyramid depth.
    pub channels: Vec<usize>,
    /// Hidden width of the offset network.
    pub offset_hidden: usize,
    /// Hidden width of each affine-parameter network.
    pub param_hidden: usize,
    pub leaky_slope: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: vec![32, 48, 64, 96],
            offset_hidden: 16,
            param_hidden: 32,
            leaky_slope: 0.1,
            ablation: Ablation::BOTH_ON,
        }
    }
}

impl ModelConfig {
    pub fn with_ablation(ablation: Ablation) -> Self {
        ModelConfig {
            ablation,
            ..Self::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(format!("bad channel schedule {:?}", self.channels)));
        }
        if self.offset_hidden == 0 || self.param_hidden == 0 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config(format!("bad leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    /// Checks that an `h x w` frame can pass through every level.
    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << self.levels();
        if h == 0 || w == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return Err(Error::Shape(format!("frame {h}x{w} is not divisible by {f}")));
        }
        Ok(())
    }
}

/// Number of trainable scalars of the default network with the given flags.
pub fn count_parameters(ablation: Ablation) -> usize {
    Net::<f32>::new(ModelConfig::with_ablation(ablation), 0)
        .expect("default config is valid")
        .parameter_count()
}

/// `alpha * f + beta` elementwise on equally shaped tensors.
pub fn dft_apply<T: Real>(f: &Tensor<T>, alpha: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
    if f.shape() != alpha.shape() || f.shape() != beta.shape() {
        return Err(Error::Shape(format!(
            "dft: feature {:?}, alpha {:?}, shift {:?}",
            f.shape(),
            alpha.shape(),
            beta.shape()
        )));
    }
    let data = f
        .data()
        .iter()
        .zip(alpha.data())
        .zip(beta.data())
        .map(|((&x, &a), &b)| a * x + b)
        .collect();
    Tensor::from_vec(f.shape(), data)
}

/// Bilinear backward warp with horizontal wraparound and vertical clamping.
pub fn backward_warp<T: Real>(src: &Tensor<T>, flow: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let s = g.input(src.clone(), InputKind::Image);
    let f = g.input(flow.clone(), InputKind::Constant);
    let out = g.warp(s, f)?;
    Ok(g.value(out).clone())
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    fn apply<T: Real>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(p, self.w);
        let b = g.param(p, self.b);
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
struct Guard {
    /// Offset network, present when the guard is enabled.
    offset: Option<[Conv; 2]>,
    /// Deformable when the guard is enabled, plain otherwise.
    main: Conv,
    post: [Conv; 2],
}

#[derive(Debug, Clone)]
struct EncoderLevel {
    down: Conv,
    guard: Guard,
}

#[derive(Debug, Clone, Copy)]
struct ParamNet {
    hidden: Conv,
    out: Conv,
    channels: usize,
}

#[derive(Debug, Clone)]
struct DecoderLevel {
    body: [Conv; 2],
    dft: Option<[ParamNet; 2]>,
    flow_head: Conv,
    mask_head: Conv,
    residual_head: Option<Conv>,
}

enum Init {
    FanIn,
    Zero,
    /// Zero weights; bias emits one for the first half and zero for the rest.
    Identity,
}

struct Builder {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, init: Init) -> Conv {
        let wshape = [cout, cin, k, k];
        let fan_in = cin * k * k;
        let (w, b) = match init {
            Init::FanIn => (
                fan_in_uniform(wshape, fan_in, &mut self.rng),
                fan_in_uniform([1, cout, 1, 1], fan_in, &mut self.rng),
            ),
            Init::Zero => (Tensor::zeros(wshape), Tensor::zeros([1, cout, 1, 1])),
            Init::Identity => {
                let bias = (0..cout).map(|i| if i < cout / 2 { 1.0 } else { 0.0 }).collect();
                (
                    Tensor::zeros(wshape),
                    Tensor::from_vec([1, cout, 1, 1], bias).expect("bias length"),
                )
            }
        };
        Conv {
            w: self.store.register(format!("{name}.weight"), w),
            b: self.store.register(format!("{name}.bias"), b),
            stride,
            pad,
        }
    }

    fn param_net(&mut self, name: &str, hidden: usize, channels: usize) -> ParamNet {
        ParamNet {
            hidden: self.conv(&format!("{name}.hidden"), 1, hidden, 1, 1, 0, Init::FanIn),
            out: self.conv(&format!("{name}.out"), hidden, 2 * channels, 1, 1, 0, Init::Identity),
            channels,
        }
    }
}

/// Per-level prior inputs shared by both encoders and the decoder.
#[derive(Debug, Clone)]
pub struct Priors {
    /// Condition map leaf at each level resolution, finest first.
    pub conditions: Vec<Var>,
    /// Guard offsets at each level, `None` when the guard is disabled.
    pub offsets: Vec<Option<Var>>,
}

/// Bilateral flow estimate at one level.
#[derive(Debug, Clone, Copy)]
pub struct BilateralFlow {
    /// Flow from the middle frame to the first input, in level pixels.
    pub f_t0: Var,
    /// Flow from the middle frame to the second input.
    pub f_t1: Var,
    /// Blend weight of the first input, in `[0, 1]`.
    pub mask: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct DecodedLevel {
    /// 1 is the finest level.
    pub level: usize,
    pub flow: BilateralFlow,
    pub feature: Var,
    /// Frame residual, produced at the finest level only.
    pub residual: Option<Var>,
}

/// Graph handles produced by [`Net::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub prediction: Var,
    /// Full-resolution flows, mask and residual used for synthesis.
    pub flow: BilateralFlow,
    pub residual: Var,
    pub warped: [Var; 2],
    pub pyramids: [Vec<Var>; 2],
    /// Decoder outputs from coarsest to finest.
    pub levels: Vec<DecodedLevel>,
    pub priors: Priors,
}

/// Network weights plus the layer wiring.
#[derive(Debug, Clone)]
pub struct Net<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    encoder: Vec<EncoderLevel>,
    decoder: Vec<DecoderLevel>,
}

impl<T: Real> Net<T> {
    /// Builds a freshly initialized network. Initialization is drawn in f64
    /// from a seeded generator, so every precision starts from the same weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let ab = config.ablation;
        let mut encoder = Vec::with_capacity(config.levels());
        let mut cin = CHANNELS;
        for (i, &c) in config.channels.iter().enumerate() {
            let p = format!("encoder.l{}", i + 1);
            let down = b.conv(&format!("{p}.down"), cin, c, 2, 2, 0, Init::FanIn);
            let offset = ab.guard.then(|| {
                let h = config.offset_hidden;
                [
                    b.conv(&format!("{p}.guard.offset.0"), 1, h, 3, 1, 1, Init::FanIn),
                    b.conv(&format!("{p}.guard.offset.1"), h, 18, 3, 1, 1, Init::Zero),
                ]
            });
            let main_name = if ab.guard { "dcn" } else { "conv" };
            let main = b.conv(&format!("{p}.guard.{main_name}"), c, c, 3, 1, 1, Init::FanIn);
            let post = [
                b.conv(&format!("{p}.guard.post.0"), c, c, 3, 1, 1, Init::FanIn),
                b.conv(&format!("{p}.guard.post.1"), c, c, 3, 1, 1, Init::FanIn),
            ];
            encoder.push(EncoderLevel {
                down,
                guard: Guard { offset, main, post },
            });
            cin = c;
        }
        let levels = config.levels();
        let mut decoder: Vec<Option<DecoderLevel>> = vec![None; levels];
        for l in (1..=levels).rev() {
            let c = config.channels[l - 1];
            let p = format!("decoder.l{l}");
            let up = if l < levels { config.channels[l] } else { 0 };
            let cin = 2 * c + 4 + up;
            let body0 = b.conv(&format!("{p}.body.0"), cin, c, 3, 1, 1, Init::FanIn);
            let body1 = b.conv(&format!("{p}.body.1"), c, c, 3, 1, 1, Init::FanIn);
            let dft = ab.ftb.then(|| {
                [
                    b.param_net(&format!("{p}.dft.0"), config.param_hidden, c),
                    b.param_net(&format!("{p}.dft.1"), config.param_hidden, c),
                ]
            });
            let flow_head = b.conv(&format!("{p}.flow_head"), c, 4, 3, 1, 1, Init::Zero);
            let mask_head = b.conv(&format!("{p}.mask_head"), c, 1, 3, 1, 1, Init::FanIn);
            let residual_head = (l == 1).then(|| b.conv(&format!("{p}.residual_head"), c, 3, 3, 1, 1, Init::Zero));
            decoder[l - 1] = Some(DecoderLevel {
                body: [body0, body1],
                dft,
                flow_head,
                mask_head,
                residual_head,
            });
        }
        Ok(Net {
            config,
            params: b.store.cast(),
            encoder,
            decoder: decoder.into_iter().map(|d| d.expect("every level built")).collect(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ablation(&self) -> Ablation {
        self.config.ablation
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> Net<U> {
        Net {
            config: self.config.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        }
    }

    fn act(&self, g: &mut Graph<T>, x: Var) -> Var {
        g.leaky_relu(x, self.config.leaky_slope)
    }

    /// Inserts the level condition maps for an `h x w` input and runs the
    /// offset networks on them.
    pub fn priors(&self, g: &mut Graph<T>, h: usize, w: usize) -> Result<Priors> {
        self.config.check_dims(h, w)?;
        let mut conditions = Vec::new();
        let mut offsets = Vec::new();
        for l in 1..=self.encoder.len() {
            let map = condition_map(h >> l, w >> l)?;
            let cond = g.input(Tensor::from_condition(&map), InputKind::Condition);
            conditions.push(cond);
            offsets.push(self.guard_offsets(g, l, cond)?);
        }
        Ok(Priors { conditions, offsets })
    }

    /// Deformable offsets of level `level` computed from a condition map, or
    /// `None` when the guard is disabled.
    pub fn guard_offsets(&self, g: &mut Graph<T>, level: usize, cond: Var) -> Result<Option<Var>> {
        match &self.encoder_level(level)?.guard.offset {
            Some([c0, c1]) => {
                let hidden = c0.apply(g, &self.params, cond)?;
                let hidden = self.act(g, hidden);
                Ok(Some(c1.apply(g, &self.params, hidden)?))
            }
            None => Ok(None),
        }
    }

    /// DistortionGuard block of encoder level `level` (1-based). `offset` must
    /// be given exactly when the guard is enabled.
    pub fn distortion_guard(&self, g: &mut Graph<T>, level: usize, x: Var, offset: Option<Var>) -> Result<Var> {
        let enc = self.encoder_level(level)?;
        let main = &enc.guard.main;
        let y = match (enc.guard.offset.is_some(), offset) {
            (true, Some(off)) => {
                let w = g.param(&self.params, main.w);
                let b = g.param(&self.params, main.b);
                g.deform_conv2d(x, off, w, Some(b))?
            }
            (false, None) => main.apply(g, &self.params, x)?,
            (true, None) => return Err(Error::Argument(format!("level {level}: guard needs offsets"))),
            (false, Some(_)) => return Err(Error::Argument(format!("level {level}: guard is disabled"))),
        };
        let mut y = self.act(g, y);
        for c in &enc.guard.post {
            let z = c.apply(g, &self.params, y)?;
            y = self.act(g, z);
        }
        Ok(y)
    }

    /// Feature pyramid of one `N x 3 x H x W` frame batch, finest level first.
    pub fn extract_pyramid(&self, g: &mut Graph<T>, frame: Var, priors: &Priors) -> Result<Vec<Var>> {
        let [_, c, h, w] = g.shape(frame);
        if c != CHANNELS {
            return Err(Error::Shape(format!("expected {CHANNELS} channels, got {c}")));
        }
        self.config.check_dims(h, w)?;
        self.check_priors(g, priors, h, w)?;
        let mut x = frame;
        let mut out = Vec::with_capacity(self.encoder.len());
        for (i, enc) in self.encoder.iter().enumerate() {
            let d = enc.down.apply(g, &self.params, x)?;
            let d = self.act(g, d);
            x = self.distortion_guard(g, i + 1, d, priors.offsets[i])?;
            out.push(x);
        }
        Ok(out)
    }

    fn check_priors(&self, g: &Graph<T>, priors: &Priors, h: usize, w: usize) -> Result<()> {
        let levels = self.config.levels();
        if priors.conditions.len() != levels || priors.offsets.len() != levels {
            return Err(Error::Shape("priors do not cover every level".into()));
        }
        for (i, &c) in priors.conditions.iter().enumerate() {
            let want = [1, 1, h >> (i + 1), w >> (i + 1)];
            if g.shape(c) != want {
                return Err(Error::Shape(format!(
                    "level {} condition {:?}, expected {want:?}",
                    i + 1,
                    g.shape(c)
                )));
            }
        }
        Ok(())
    }

    fn encoder_level(&self, level: usize) -> Result<&EncoderLevel> {
        level
            .checked_sub(1)
            .and_then(|i| self.encoder.get(i))
            .ok_or_else(|| Error::Shape(format!("no level {level}")))
    }

    /// Scale and shift maps of affine layer `index` (0 or 1) at decoder
    /// level `level`, or `None` when the affine layers are disabled.
    pub fn dft_params(&self, g: &mut Graph<T>, level: usize, index: usize, cond: Var) -> Result<Option<(Var, Var)>> {
        let dec = level
            .checked_sub(1)
            .and_then(|i| self.decoder.get(i))
            .ok_or_else(|| Error::Shape(format!("no level {level}")))?;
        let Some(nets) = &dec.dft else {
            return Ok(None);
        };
        let net = nets
            .get(index)
            .ok_or_else(|| Error::Argument(format!("no affine layer {index}")))?;
        let hidden = net.hidden.apply(g, &self.params, cond)?;
        let hidden = self.act(g, hidden);
        let ab = net.out.apply(g, &self.params, hidden)?;
        let alpha = g.slice_channels(ab, 0, net.channels)?;
        let beta = g.slice_channels(ab, net.channels, net.channels)?;
        Ok(Some((alpha, beta)))
    }

    /// One decoder step at level `level`. `prev` is the output of level
    /// `level + 1` and must be absent exactly at the coarsest level.
    pub fn decode_level(
        &self,
        g: &mut Graph<T>,
        level: usize,
        phi0: Var,
        phi1: Var,
        prev: Option<&DecodedLevel>,
        cond: Var,
    ) -> Result<DecodedLevel> {
        let levels = self.config.levels();
        if level == 0 || level > levels {
            return Err(Error::Shape(format!("no level {level}")));
        }
        let dec = &self.decoder[level - 1];
        let c = self.config.channels[level - 1];
        let s = g.shape(phi0);
        if s[1] != c || g.shape(phi1) != s {
            return Err(Error::Shape(format!(
                "level {level}: features {s:?} and {:?}, expected {c} channels",
                g.shape(phi1)
            )));
        }
        let [n, _, h, w] = s;
        if g.shape(cond) != [1, 1, h, w] {
            return Err(Error::Shape(format!("level {level}: condition {:?}", g.shape(cond))));
        }
        let (f0, f1, up) = match (prev, level == levels) {
            (None, true) => {
                let zero = Tensor::zeros([n, 2, h, w]);
                let z0 = g.input(zero.clone(), InputKind::Constant);
                let z1 = g.input(zero, InputKind::Constant);
                (z0, z1, None)
            }
            (Some(p), false) if p.level == level + 1 => {
                let f0 = g.upsample2x(p.flow.f_t0);
                let f1 = g.upsample2x(p.flow.f_t1);
                let f0 = g.affine(f0, 2.0, 0.0);
                let f1 = g.affine(f1, 2.0, 0.0);
                if g.shape(f0) != [n, 2, h, w] {
                    return Err(Error::Shape(format!(
                        "level {level}: upsampled flow {:?} vs features {s:?}",
                        g.shape(f0)
                    )));
                }
                (f0, f1, Some(g.upsample2x(p.feature)))
            }
            _ => {
                return Err(Error::Shape(format!(
                    "level {level} expects input from level {}",
                    level + 1
                )))
            }
        };
        let w0 = g.warp(phi0, f0)?;
        let w1 = g.warp(phi1, f1)?;
        let mut parts = vec![w0, w1, f0, f1];
        parts.extend(up);
        let mut x = g.concat(&parts)?;
        for (k, conv) in dec.body.iter().enumerate() {
            x = conv.apply(g, &self.params, x)?;
            if let Some((alpha, beta)) = self.dft_params(g, level, k, cond)? {
                // Scale maps have batch 1 and broadcast over the batch.
                let scaled = g.mul(x, alpha)?;
                x = g.add(scaled, beta)?;
            }
            x = self.act(g, x);
        }
        let res = dec.flow_head.apply(g, &self.params, x)?;
        let r0 = g.slice_channels(res, 0, 2)?;
        let r1 = g.slice_channels(res, 2, 2)?;
        let f_t0 = g.add(f0, r0)?;
        let f_t1 = g.add(f1, r1)?;
        let logit = dec.mask_head.apply(g, &self.params, x)?;
        let mask = g.sigmoid(logit);
        let residual = match &dec.residual_head {
            Some(head) => Some(head.apply(g, &self.params, x)?),
            None => None,
        };
        Ok(DecodedLevel {
            level,
            flow: BilateralFlow { f_t0, f_t1, mask },
            feature: x,
            residual,
        })
    }

    /// Full forward pass on `N x 3 x H x W` batches.
    pub fn forward(&self, g: &mut Graph<T>, i1: Var, i2: Var) -> Result<Forward> {
        let s = g.shape(i1);
        if g.shape(i2) != s {
            return Err(Error::Shape(format!("inputs {s:?} and {:?}", g.shape(i2))));
        }
        let priors = self.priors(g, s[2], s[3])?;
        let p0 = self.extract_pyramid(g, i1, &priors)?;
        let p1 = self.extract_pyramid(g, i2, &priors)?;
        let mut levels: Vec<DecodedLevel> = Vec::with_capacity(p0.len());
        for l in (1..=p0.len()).rev() {
            let d = self.decode_level(g, l, p0[l - 1], p1[l - 1], levels.last(), priors.conditions[l - 1])?;
            levels.push(d);
        }
        let fine = *levels.last().expect("at least one level");
        let f0 = g.upsample2x(fine.flow.f_t0);
        let f_t0 = g.affine(f0, 2.0, 0.0);
        let f1 = g.upsample2x(fine.flow.f_t1);
        let f_t1 = g.affine(f1, 2.0, 0.0);
        let mask = g.upsample2x(fine.flow.mask);
        let residual = g.upsample2x(fine.residual.expect("finest level has a residual head"));
        let w0 = g.warp(i1, f_t0)?;
        let w1 = g.warp(i2, f_t1)?;
        // m * w0 + (1 - m) * w1 = w1 + m * (w0 - w1)
        let diff = g.sub(w0, w1)?;
        let blend = g.mul(mask, diff)?;
        let blend = g.add(w1, blend)?;
        let out = g.add(blend, residual)?;
        let prediction = g.clamp(out, 0.0, 1.0);
        Ok(Forward {
            prediction,
            flow: BilateralFlow { f_t0, f_t1, mask },
            residual,
            warped: [w0, w1],
            pyramids: [p0, p1],
            levels,
            priors,
        })
    }

    /// Predicts the midpoint frames of a batch of pairs.
    pub fn interpolate_batch(&self, pairs: &[(&Frame, &Frame)]) -> Result<Vec<Frame>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let first: Vec<&Frame> = pairs.iter().map(|p| p.0).collect();
        let second: Vec<&Frame> = pairs.iter().map(|p| p.1).collect();
        first[0].check_same_shape(second[0])?;
        let mut g = Graph::new();
        let a = g.input(Tensor::from_frames(&first)?, InputKind::Image);
        let b = g.input(Tensor::from_frames(&second)?, InputKind::Image);
        let fwd = self.forward(&mut g, a, b)?;
        let pred = g.value(fwd.prediction);
        (0..pairs.len()).map(|n| pred.to_frame(n)).collect()
    }

    pub fn interpolate(&self, i1: &Frame, i2: &Frame) -> Result<Frame> {
        Ok(self.interpolate_batch(&[(i1, i2)])?.remove(0))
    }
}

/// True when `v` reads any condition map leaf.
pub fn uses_condition<T: Real>(g: &Graph<T>, v: Var) -> bool {
    g.depends_on(v, |leaf| leaf == Leaf::Input(InputKind::Condition))
}

/// True when `v` reads any frame leaf.
pub fn uses_frames<T: Real>(g: &Graph<T>, v: Var) -> bool {
    g.depends_on(v, |leaf| leaf == Leaf::Input(InputKind::Image))
}
