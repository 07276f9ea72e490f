//! Deformable 2-D convolution (stride 1, "same" padding, odd kernel).
//!
//! Offset tensor layout: for kernel tap `k = ky * K + kx`, channel `2k` holds
//! the vertical displacement and channel `2k + 1` the horizontal one, in
//! pixels. Samples falling outside the image read zero, so zero offsets give
//! exactly a zero-padded convolution. The offset tensor may have batch size 1,
//! in which case it is shared by every batch element.

use super::tensor::{gemm, Real, Tensor};

#[derive(Clone, Copy)]
struct Sample<T> {
    idx: [usize; 4],
    w: [T; 4],
    dwy: [T; 4],
    dwx: [T; 4],
}

fn sample_at<T: Real>(py: T, px: T, height: usize, width: usize) -> Sample<T> {
    let zero = T::zero();
    let mut s = Sample {
        idx: [0; 4],
        w: [zero; 4],
        dwy: [zero; 4],
        dwx: [zero; 4],
    };
    let (hf, wf) = (T::of(height as f64), T::of(width as f64));
    let neg1 = -T::one();
    if !(py > neg1 && px > neg1 && py < hf && px < wf) {
        return s;
    }
    let y0f = py.floor();
    let x0f = px.floor();
    let ly = py - y0f;
    let lx = px - x0f;
    let hy = T::one() - ly;
    let hx = T::one() - lx;
    let y0 = y0f.to_isize().unwrap();
    let x0 = x0f.to_isize().unwrap();
    let corners = [(y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1)];
    let w = [hy * hx, hy * lx, ly * hx, ly * lx];
    let dwy = [-hx, -lx, hx, lx];
    let dwx = [-hy, hy, -ly, ly];
    for j in 0..4 {
        let (cy, cx) = corners[j];
        if cy >= 0 && cx >= 0 && (cy as usize) < height && (cx as usize) < width {
            s.idx[j] = cy as usize * width + cx as usize;
            s.w[j] = w[j];
            s.dwy[j] = dwy[j];
            s.dwx[j] = dwx[j];
        }
    }
    s
}

/// Sampling table `[tap][pixel]` for one offset batch element.
fn build_samples<T: Real>(offset: &Tensor<T>, oi: usize, kernel: usize, height: usize, width: usize) -> Vec<Sample<T>> {
    let pad = (kernel / 2) as isize;
    let taps = kernel * kernel;
    let hw = height * width;
    let base = oi * offset.sample_len();
    let off = offset.data();
    let mut out = Vec::with_capacity(taps * hw);
    for k in 0..taps {
        let (ky, kx) = ((k / kernel) as isize, (k % kernel) as isize);
        let dy = &off[base + 2 * k * hw..base + (2 * k + 1) * hw];
        let dx = &off[base + (2 * k + 1) * hw..base + (2 * k + 2) * hw];
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let py = T::of((y as isize - pad + ky) as f64) + dy[p];
                let px = T::of((x as isize - pad + kx) as f64) + dx[p];
                out.push(sample_at(py, px, height, width));
            }
        }
    }
    out
}

fn deformed_cols<T: Real>(x: &[T], channels: usize, hw: usize, taps: usize, samples: &[Sample<T>], cols: &mut [T]) {
    for c in 0..channels {
        let plane = &x[c * hw..(c + 1) * hw];
        for k in 0..taps {
            let row = &mut cols[(c * taps + k) * hw..(c * taps + k + 1) * hw];
            let srow = &samples[k * hw..(k + 1) * hw];
            for (dst, s) in row.iter_mut().zip(srow) {
                *dst = s.w[0] * plane[s.idx[0]]
                    + s.w[1] * plane[s.idx[1]]
                    + s.w[2] * plane[s.idx[2]]
                    + s.w[3] * plane[s.idx[3]];
            }
        }
    }
}

pub(crate) fn forward<T: Real>(x: &Tensor<T>, offset: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let [n, c, h, wd] = x.shape();
    let [out_c, _, kernel, _] = w.shape();
    let taps = kernel * kernel;
    let hw = h * wd;
    let shared = offset.shape()[0] == 1;
    let mut out = Tensor::zeros([n, out_c, h, wd]);
    let mut cols = vec![T::zero(); c * taps * hw];
    let mut samples = build_samples(offset, 0, kernel, h, wd);
    let in_len = x.sample_len();
    let out_len = out.sample_len();
    for i in 0..n {
        if !shared && i > 0 {
            samples = build_samples(offset, i, kernel, h, wd);
        }
        deformed_cols(
            &x.data()[i * in_len..(i + 1) * in_len],
            c,
            hw,
            taps,
            &samples,
            &mut cols,
        );
        let dst = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
        gemm(out_c, c * taps, hw, w.data(), false, &cols, false, dst, false);
        if let Some(b) = b {
            for (o, chunk) in dst.chunks_mut(hw).enumerate() {
                let bias = b.data()[o];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
    }
    out
}

pub(crate) struct DeformGrads<T> {
    pub x: Option<Tensor<T>>,
    pub offset: Option<Tensor<T>>,
    pub w: Option<Tensor<T>>,
    pub b: Option<Tensor<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    x: &Tensor<T>,
    offset: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    grad_out: &Tensor<T>,
    need_x: bool,
    need_offset: bool,
    need_w: bool,
) -> DeformGrads<T> {
    let [n, c, h, wd] = x.shape();
    let [out_c, _, kernel, _] = w.shape();
    let taps = kernel * kernel;
    let hw = h * wd;
    let shared = offset.shape()[0] == 1;
    let mut gx = need_x.then(|| Tensor::zeros(x.shape()));
    let mut goff = need_offset.then(|| Tensor::zeros(offset.shape()));
    let mut gw = need_w.then(|| Tensor::zeros(w.shape()));
    let mut gb = has_bias.then(|| Tensor::zeros([1, out_c, 1, 1]));
    let mut cols = vec![T::zero(); c * taps * hw];
    let mut gcols = vec![T::zero(); c * taps * hw];
    let mut samples = build_samples(offset, 0, kernel, h, wd);
    let in_len = x.sample_len();
    let out_len = grad_out.sample_len();
    let off_len = offset.sample_len();
    for i in 0..n {
        if !shared && i > 0 {
            samples = build_samples(offset, i, kernel, h, wd);
        }
        let xs = &x.data()[i * in_len..(i + 1) * in_len];
        let go = &grad_out.data()[i * out_len..(i + 1) * out_len];
        if let Some(gb) = gb.as_mut() {
            for (o, chunk) in go.chunks(hw).enumerate() {
                gb.data_mut()[o] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            deformed_cols(xs, c, hw, taps, &samples, &mut cols);
            gemm(out_c, hw, c * taps, go, false, &cols, true, gw.data_mut(), true);
        }
        if gx.is_none() && goff.is_none() {
            continue;
        }
        gemm(c * taps, out_c, hw, w.data(), true, go, false, &mut gcols, false);
        let oi = if shared { 0 } else { i };
        for ch in 0..c {
            let plane = &xs[ch * hw..(ch + 1) * hw];
            for k in 0..taps {
                let grow = &gcols[(ch * taps + k) * hw..(ch * taps + k + 1) * hw];
                let srow = &samples[k * hw..(k + 1) * hw];
                if let Some(gx) = gx.as_mut() {
                    let gplane = &mut gx.data_mut()[i * in_len + ch * hw..i * in_len + (ch + 1) * hw];
                    for (g, s) in grow.iter().zip(srow) {
                        for j in 0..4 {
                            gplane[s.idx[j]] += s.w[j] * *g;
                        }
                    }
                }
                if let Some(goff) = goff.as_mut() {
                    let base = oi * off_len;
                    let (gy_row, gx_row) = goff.data_mut()[base + 2 * k * hw..base + (2 * k + 2) * hw].split_at_mut(hw);
                    for (p, (g, s)) in grow.iter().zip(srow).enumerate() {
                        let mut vy = T::zero();
                        let mut vx = T::zero();
                        for j in 0..4 {
                            let v = plane[s.idx[j]];
                            vy += s.dwy[j] * v;
                            vx += s.dwx[j] * v;
                        }
                        gy_row[p] += *g * vy;
                        gx_row[p] += *g * vx;
                    }
                }
            }
        }
    }
    DeformGrads {
        x: gx,
        offset: goff,
        w: gw,
        b: gb,
    }
}
