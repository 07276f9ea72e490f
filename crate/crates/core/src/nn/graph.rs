//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every value produced during a forward pass together
//! with the operation that produced it. [`Graph::backward`] walks the record
//! in reverse and returns gradients for every node that depends on a
//! parameter.

use super::params::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use super::{conv, deform, sample};
use crate::error::{Error, Result};
use crate::loss::{smooth_l1_term, Reduction};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a leaf input represents. Used for dependency audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Image,
    Condition,
    Target,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leaf {
    Input(InputKind),
    Param(ParamId),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf(Leaf),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    DeformConv2d {
        x: Var,
        offset: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
        len: usize,
    },
    Warp {
        src: Var,
        flow: Var,
    },
    Upsample2x(Var),
    Sum(Var),
    WeightedSmoothL1 {
        pred: Var,
        target: Var,
        weight: Var,
        delta: f64,
        reduction: Reduction,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf(_) => vec![],
            Op::Conv2d { x, w, b, .. } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::DeformConv2d { x, offset, w, b } => {
                [Some(*x), Some(*offset), Some(*w), *b].into_iter().flatten().collect()
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Affine(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::Clamp(a, _, _)
            | Op::Upsample2x(a)
            | Op::Sum(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Slice { x, .. } => vec![*x],
            Op::Warp { src, flow } => vec![*src, *flow],
            Op::WeightedSmoothL1 {
                pred, target, weight, ..
            } => vec![*pred, *target, *weight],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::DeformConv2d { .. } => "deform_conv2d",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Clamp(..) => "clamp",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Warp { .. } => "warp",
            Op::Upsample2x(_) => "upsample2x",
            Op::Sum(_) => "sum",
            Op::WeightedSmoothL1 { .. } => "weighted_smooth_l1",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn broadcast_shape(a: [usize; 4], b: [usize; 4]) -> Result<[usize; 4]> {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}"))),
        };
    }
    Ok(out)
}

fn strides_for(shape: [usize; 4], out: [usize; 4]) -> [usize; 4] {
    let dense = [shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1];
    let mut s = [0; 4];
    for i in 0..4 {
        s[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { dense[i] };
    }
    s
}

/// Visits `(out_index, a_index, b_index)` for a broadcast binary op.
fn for_each_broadcast(a: [usize; 4], b: [usize; 4], out: [usize; 4], mut f: impl FnMut(usize, usize, usize)) {
    let sa = strides_for(a, out);
    let sb = strides_for(b, out);
    let mut o = 0;
    for n in 0..out[0] {
        for c in 0..out[1] {
            for y in 0..out[2] {
                let base_a = n * sa[0] + c * sa[1] + y * sa[2];
                let base_b = n * sb[0] + c * sb[1] + y * sb[2];
                for x in 0..out[3] {
                    f(o, base_a + x * sa[3], base_b + x * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf(Leaf::Param(_)) => true,
            Op::Leaf(Leaf::Input(_)) => false,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>, kind: InputKind) -> Var {
        self.push(value, Op::Leaf(Leaf::Input(kind)))
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Leaf(Leaf::Param(id)))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if ws[1] != xs[1] || ws[2] != ws[3] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv2d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3] {
            return Err(Error::Shape(format!("conv2d: input {xs:?} smaller than kernel {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [1, ws[0], 1, 1] {
                return Err(Error::Shape(format!("conv2d: bias shape {:?}", self.shape(b))));
            }
        }
        let value = conv::forward(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad);
        Ok(self.push(value, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn deform_conv2d(&mut self, x: Var, offset: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let os = self.shape(offset);
        let k = ws[2];
        if ws[1] != xs[1] || ws[2] != ws[3] || k.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "deform_conv2d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if (os[0] != 1 && os[0] != xs[0]) || os[1] != 2 * k * k || os[2] != xs[2] || os[3] != xs[3] {
            return Err(Error::Shape(format!(
                "deform_conv2d: offset {os:?} does not fit input {xs:?}"
            )));
        }
        let value = deform::forward(
            self.value(x),
            self.value(offset),
            self.value(w),
            b.map(|b| self.value(b)),
        );
        Ok(self.push(value, Op::DeformConv2d { x, offset, w, b }))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, [usize; 4])> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa, sb)?;
        let mut out = Tensor::zeros(out_shape);
        {
            let (va, vb) = (self.value(a).data(), self.value(b).data());
            let od = out.data_mut();
            for_each_broadcast(sa, sb, out_shape, |o, ia, ib| od[o] = f(va[ia], vb[ib]));
        }
        Ok((out, out_shape))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary(a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product with broadcasting over size-1 dims.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary(a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (T::of(scale), T::of(shift));
        let out = self.value(a).map(|v| v * s + t);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = T::of(slope);
        let out = self.value(a).map(|v| if v > T::zero() { v } else { v * s });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (T::of(lo), T::of(hi));
        let out = self.value(a).map(|v| if v.is_nan() { v } else { v.max(l).min(h) });
        self.push(out, Op::Clamp(a, lo, hi))
    }

    /// Concatenation along channels.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let [n, _, h, w] = self.shape(first);
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != n || s[2] != h || s[3] != w {
                return Err(Error::Shape(format!(
                    "concat: {s:?} does not match {:?}",
                    self.shape(first)
                )));
            }
            channels += s[1];
        }
        let hw = h * w;
        let mut out = Tensor::zeros([n, channels, h, w]);
        for i in 0..n {
            let mut c0 = 0;
            for &p in parts {
                let v = self.value(p);
                let pc = v.shape()[1];
                let src = &v.data()[i * pc * hw..(i + 1) * pc * hw];
                let start = (i * channels + c0) * hw;
                out.data_mut()[start..start + pc * hw].copy_from_slice(src);
                c0 += pc;
            }
        }
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [n, c, h, w] = self.shape(x);
        if start + len > c || len == 0 {
            return Err(Error::Shape(format!("slice {start}..{} of {c} channels", start + len)));
        }
        let hw = h * w;
        let mut out = Tensor::zeros([n, len, h, w]);
        for i in 0..n {
            let src = &self.value(x).data()[(i * c + start) * hw..(i * c + start + len) * hw];
            out.data_mut()[i * len * hw..(i + 1) * len * hw].copy_from_slice(src);
        }
        Ok(self.push(out, Op::Slice { x, start, len }))
    }

    /// Backward warp of `src` by a 2-channel pixel flow (x then y component).
    pub fn warp(&mut self, src: Var, flow: Var) -> Result<Var> {
        let ss = self.shape(src);
        let fs = self.shape(flow);
        if fs != [ss[0], 2, ss[2], ss[3]] {
            return Err(Error::Shape(format!("warp: flow {fs:?} does not fit source {ss:?}")));
        }
        if !self.value(flow).all_finite() {
            return Err(Error::Numeric("warp: flow contains non-finite values".into()));
        }
        let out = sample::warp_forward(self.value(src), self.value(flow));
        Ok(self.push(out, Op::Warp { src, flow }))
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let out = sample::upsample2x_forward(self.value(x));
        self.push(out, Op::Upsample2x(x))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Scalar latitude-weighted smooth-L1 of `target - pred`. `weight` is
    /// broadcast against `pred`.
    pub fn weighted_smooth_l1(
        &mut self,
        pred: Var,
        target: Var,
        weight: Var,
        delta: f64,
        reduction: Reduction,
    ) -> Result<Var> {
        let ps = self.shape(pred);
        if self.shape(target) != ps {
            return Err(Error::Shape(format!(
                "loss: prediction {ps:?} vs target {:?}",
                self.shape(target)
            )));
        }
        let out_shape = broadcast_shape(ps, self.shape(weight))?;
        if out_shape != ps {
            return Err(Error::Shape(format!(
                "loss: weight {:?} does not broadcast to {ps:?}",
                self.shape(weight)
            )));
        }
        let d = T::of(delta);
        let (p, t, w) = (
            self.value(pred).data(),
            self.value(target).data(),
            self.value(weight).data(),
        );
        let mut total = T::zero();
        for_each_broadcast(ps, self.shape(weight), ps, |o, _, iw| {
            total += w[iw] * smooth_l1_term(t[o] - p[o], d).0;
        });
        if reduction == Reduction::Mean {
            total = total / T::of(p.len() as f64);
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedSmoothL1 {
                pred,
                target,
                weight,
                delta,
                reduction,
            },
        ))
    }

    /// True when any leaf reachable from `v` satisfies `pred`.
    pub fn depends_on(&self, v: Var, pred: impl Fn(Leaf) -> bool) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![v.0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf(l) => {
                    if pred(*l) {
                        return true;
                    }
                }
                op => stack.extend(op.inputs().into_iter().map(|p| p.0)),
            }
        }
        false
    }

    /// Names of the operations that directly consume a leaf matching `pred`,
    /// restricted to the sub-graph feeding `v`.
    pub fn consumers_of(&self, v: Var, pred: impl Fn(Leaf) -> bool) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![v.0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            let inputs = self.nodes[i].op.inputs();
            if inputs
                .iter()
                .any(|p| matches!(self.nodes[p.0].op, Op::Leaf(l) if pred(l)))
            {
                out.push(self.nodes[i].op.name());
            }
            stack.extend(inputs.into_iter().map(|p| p.0));
        }
        out
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.shape(loss) != [1, 1, 1, 1] {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backward_node(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let accumulate = |grads: &mut [Option<Tensor<T>>], v: Var, t: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf(_) => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let r = conv::backward(
                    self.value(*x),
                    self.value(*w),
                    b.is_some() && self.needs(b.unwrap()),
                    g,
                    *stride,
                    *pad,
                    self.needs(*x),
                    self.needs(*w),
                );
                if let Some(t) = r.x {
                    accumulate(grads, *x, t);
                }
                if let Some(t) = r.w {
                    accumulate(grads, *w, t);
                }
                if let (Some(t), Some(b)) = (r.b, b) {
                    accumulate(grads, *b, t);
                }
            }
            Op::DeformConv2d { x, offset, w, b } => {
                let r = deform::backward(
                    self.value(*x),
                    self.value(*offset),
                    self.value(*w),
                    b.is_some() && self.needs(b.unwrap()),
                    g,
                    self.needs(*x),
                    self.needs(*offset),
                    self.needs(*w),
                );
                if let Some(t) = r.x {
                    accumulate(grads, *x, t);
                }
                if let Some(t) = r.offset {
                    accumulate(grads, *offset, t);
                }
                if let Some(t) = r.w {
                    accumulate(grads, *w, t);
                }
                if let (Some(t), Some(b)) = (r.b, b) {
                    accumulate(grads, *b, t);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let out = node.value.shape();
                let mut ga = self.needs(*a).then(|| Tensor::zeros(sa));
                let mut gb = self.needs(*b).then(|| Tensor::zeros(sb));
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let gd = g.data();
                let kind = match &node.op {
                    Op::Add(..) => 0,
                    Op::Sub(..) => 1,
                    _ => 2,
                };
                for_each_broadcast(sa, sb, out, |o, ia, ib| {
                    let go = gd[o];
                    if let Some(ga) = ga.as_mut() {
                        ga.data_mut()[ia] += if kind == 2 { go * vb[ib] } else { go };
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb.data_mut()[ib] += match kind {
                            0 => go,
                            1 => -go,
                            _ => go * va[ia],
                        };
                    }
                });
                if let Some(t) = ga {
                    accumulate(grads, *a, t);
                }
                if let Some(t) = gb {
                    accumulate(grads, *b, t);
                }
            }
            Op::Affine(a, scale) => {
                let s = T::of(*scale);
                accumulate(grads, *a, g.map(|v| v * s));
            }
            Op::LeakyRelu(a, slope) => {
                let s = T::of(*slope);
                let x = self.value(*a);
                let mut t = g.clone();
                t.data_mut().iter_mut().zip(x.data()).for_each(|(gv, &xv)| {
                    if xv <= T::zero() {
                        *gv *= s
                    }
                });
                accumulate(grads, *a, t);
            }
            Op::Sigmoid(a) => {
                let mut t = g.clone();
                t.data_mut()
                    .iter_mut()
                    .zip(node.value.data())
                    .for_each(|(gv, &y)| *gv *= y * (T::one() - y));
                accumulate(grads, *a, t);
            }
            Op::Clamp(a, lo, hi) => {
                let (l, h) = (T::of(*lo), T::of(*hi));
                let mut t = g.clone();
                t.data_mut().iter_mut().zip(self.value(*a).data()).for_each(|(gv, &x)| {
                    if x < l || x > h {
                        *gv = T::zero()
                    }
                });
                accumulate(grads, *a, t);
            }
            Op::Concat(parts) => {
                let [n, channels, h, w] = node.value.shape();
                let hw = h * w;
                let mut c0 = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    if self.needs(p) {
                        let mut t = Tensor::zeros(self.shape(p));
                        for bi in 0..n {
                            let start = (bi * channels + c0) * hw;
                            t.data_mut()[bi * pc * hw..(bi + 1) * pc * hw]
                                .copy_from_slice(&g.data()[start..start + pc * hw]);
                        }
                        accumulate(grads, p, t);
                    }
                    c0 += pc;
                }
            }
            Op::Slice { x, start, len } => {
                let [n, c, h, w] = self.shape(*x);
                let hw = h * w;
                let mut t = Tensor::zeros([n, c, h, w]);
                for bi in 0..n {
                    let dst = (bi * c + start) * hw;
                    t.data_mut()[dst..dst + len * hw].copy_from_slice(&g.data()[bi * len * hw..(bi + 1) * len * hw]);
                }
                accumulate(grads, *x, t);
            }
            Op::Warp { src, flow } => {
                let (gs, gf) = sample::warp_backward(
                    self.value(*src),
                    self.value(*flow),
                    g,
                    self.needs(*src),
                    self.needs(*flow),
                );
                if let Some(t) = gs {
                    accumulate(grads, *src, t);
                }
                if let Some(t) = gf {
                    accumulate(grads, *flow, t);
                }
            }
            Op::Upsample2x(a) => {
                let t = sample::upsample2x_backward(self.shape(*a), g);
                accumulate(grads, *a, t);
            }
            Op::Sum(a) => {
                accumulate(grads, *a, Tensor::full(self.shape(*a), g.data()[0]));
            }
            Op::WeightedSmoothL1 {
                pred,
                target,
                weight,
                delta,
                reduction,
            } => {
                let ps = self.shape(*pred);
                let d = T::of(*delta);
                let mut scale = g.data()[0];
                if *reduction == Reduction::Mean {
                    scale = scale / T::of(self.value(*pred).len() as f64);
                }
                let (p, t, w) = (
                    self.value(*pred).data(),
                    self.value(*target).data(),
                    self.value(*weight).data(),
                );
                if self.needs(*pred) {
                    let mut gp = Tensor::zeros(ps);
                    let gd = gp.data_mut();
                    for_each_broadcast(ps, self.shape(*weight), ps, |o, _, iw| {
                        gd[o] = -w[iw] * smooth_l1_term(t[o] - p[o], d).1 * scale;
                    });
                    accumulate(grads, *pred, gp);
                }
            }
        }
    }
}

/// Per-node gradients from [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients gathered per parameter, summing over repeated uses.
    pub fn for_params(&self, graph: &Graph<T>, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        for (i, node) in graph.nodes.iter().enumerate() {
            if let (Op::Leaf(Leaf::Param(id)), Some(g)) = (&node.op, &self.grads[i]) {
                out[id.index()].add_assign(g);
            }
        }
        out
    }
}
