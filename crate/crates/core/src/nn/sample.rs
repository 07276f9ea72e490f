//! Resampling kernels: flow-driven backward warping and 2x bilinear upsampling.

use super::tensor::{Real, Tensor};

/// Bilinear lookup position for backward warping on an ERP grid.
///
/// Longitude wraps around; latitude is clamped to the first and last row
/// (border mode, so the vertical derivative vanishes while clamped).
#[derive(Clone, Copy)]
struct WarpTap<T> {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    lx: T,
    ly: T,
    y_clamped: bool,
}

fn warp_tap<T: Real>(x: usize, y: usize, fx: T, fy: T, height: usize, width: usize) -> WarpTap<T> {
    let sx = T::of(x as f64) + fx;
    let mut sy = T::of(y as f64) + fy;
    let max_y = T::of((height - 1) as f64);
    let y_clamped = sy < T::zero() || sy > max_y;
    sy = sy.max(T::zero()).min(max_y);
    let x0f = sx.floor();
    let y0f = sy.floor();
    let lx = sx - x0f;
    let ly = sy - y0f;
    let w = width as i64;
    let x0 = x0f.to_i64().unwrap().rem_euclid(w) as usize;
    let x1 = (x0 + 1) % width;
    let y0 = y0f.to_usize().unwrap().min(height - 1);
    let y1 = (y0 + 1).min(height - 1);
    WarpTap {
        x0,
        x1,
        y0,
        y1,
        lx,
        ly,
        y_clamped,
    }
}

/// `out[n, c, y, x] = src[n, c, y + flow_y, x + flow_x]`, flow channel 0 is
/// horizontal and channel 1 vertical, in pixels.
pub(crate) fn warp_forward<T: Real>(src: &Tensor<T>, flow: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = src.shape();
    let hw = h * w;
    let mut out = Tensor::zeros(src.shape());
    for i in 0..n {
        let fx = &flow.data()[(i * 2) * hw..(i * 2 + 1) * hw];
        let fy = &flow.data()[(i * 2 + 1) * hw..(i * 2 + 2) * hw];
        let taps: Vec<WarpTap<T>> = (0..hw).map(|p| warp_tap(p % w, p / w, fx[p], fy[p], h, w)).collect();
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let plane = &src.data()[off..off + hw];
            let dst = &mut out.data_mut()[off..off + hw];
            for (d, t) in dst.iter_mut().zip(&taps) {
                let top = plane[t.y0 * w + t.x0] * (T::one() - t.lx) + plane[t.y0 * w + t.x1] * t.lx;
                let bot = plane[t.y1 * w + t.x0] * (T::one() - t.lx) + plane[t.y1 * w + t.x1] * t.lx;
                *d = top * (T::one() - t.ly) + bot * t.ly;
            }
        }
    }
    out
}

pub(crate) fn warp_backward<T: Real>(
    src: &Tensor<T>,
    flow: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_src: bool,
    need_flow: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let [n, c, h, w] = src.shape();
    let hw = h * w;
    let mut gsrc = need_src.then(|| Tensor::zeros(src.shape()));
    let mut gflow = need_flow.then(|| Tensor::zeros(flow.shape()));
    for i in 0..n {
        let fx = &flow.data()[(i * 2) * hw..(i * 2 + 1) * hw];
        let fy = &flow.data()[(i * 2 + 1) * hw..(i * 2 + 2) * hw];
        let taps: Vec<WarpTap<T>> = (0..hw).map(|p| warp_tap(p % w, p / w, fx[p], fy[p], h, w)).collect();
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let g = &grad_out.data()[off..off + hw];
            if let Some(gs) = gsrc.as_mut() {
                let gplane = &mut gs.data_mut()[off..off + hw];
                for (gv, t) in g.iter().zip(&taps) {
                    let (hx, hy) = (T::one() - t.lx, T::one() - t.ly);
                    gplane[t.y0 * w + t.x0] += *gv * hx * hy;
                    gplane[t.y0 * w + t.x1] += *gv * t.lx * hy;
                    gplane[t.y1 * w + t.x0] += *gv * hx * t.ly;
                    gplane[t.y1 * w + t.x1] += *gv * t.lx * t.ly;
                }
            }
            if let Some(gf) = gflow.as_mut() {
                let plane = &src.data()[off..off + hw];
                let (gx_plane, gy_plane) = gf.data_mut()[(i * 2) * hw..(i * 2 + 2) * hw].split_at_mut(hw);
                for (p, (gv, t)) in g.iter().zip(&taps).enumerate() {
                    let v00 = plane[t.y0 * w + t.x0];
                    let v01 = plane[t.y0 * w + t.x1];
                    let v10 = plane[t.y1 * w + t.x0];
                    let v11 = plane[t.y1 * w + t.x1];
                    let (hx, hy) = (T::one() - t.lx, T::one() - t.ly);
                    gx_plane[p] += *gv * ((v01 - v00) * hy + (v11 - v10) * t.ly);
                    if !t.y_clamped {
                        gy_plane[p] += *gv * ((v10 - v00) * hx + (v11 - v01) * t.lx);
                    }
                }
            }
        }
    }
    (gsrc, gflow)
}

/// Source indices and weights for one axis of 2x upsampling with half-pixel
/// centers: output `i` reads input coordinate `(i + 0.5) / 2 - 0.5`.
fn upsample_axis<T: Real>(len: usize) -> Vec<(usize, usize, T)> {
    (0..2 * len)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, T::of(src - i0 as f64))
        })
        .collect()
}

pub(crate) fn upsample2x_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let ys = upsample_axis::<T>(h);
    let xs = upsample_axis::<T>(w);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let top = src[y0 * w + x0] * (T::one() - lx) + src[y0 * w + x1] * lx;
                let bot = src[y1 * w + x0] * (T::one() - lx) + src[y1 * w + x1] * lx;
                dst[oy * ow + ox] = top * (T::one() - ly) + bot * ly;
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward<T: Real>(input_shape: [usize; 4], grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = input_shape;
    let (oh, ow) = (2 * h, 2 * w);
    let ys = upsample_axis::<T>(h);
    let xs = upsample_axis::<T>(w);
    let mut gx = Tensor::zeros(input_shape);
    for p in 0..n * c {
        let g = &grad_out.data()[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gx.data_mut()[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let gv = g[oy * ow + ox];
                let (hx, hy) = (T::one() - lx, T::one() - ly);
                dst[y0 * w + x0] += gv * hx * hy;
                dst[y0 * w + x1] += gv * lx * hy;
                dst[y1 * w + x0] += gv * hx * ly;
                dst[y1 * w + x1] += gv * lx * ly;
            }
        }
    }
    gx
}
