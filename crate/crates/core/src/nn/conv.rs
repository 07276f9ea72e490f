//! Dense 2-D convolution via im2col + GEMM, zero padding.

use super::tensor::{gemm, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeometry, x: &mut [T]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn geometry_of<T: Real>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> ConvGeometry {
    let [_, c, h, wd] = x.shape();
    ConvGeometry {
        channels: c,
        height: h,
        width: wd,
        kernel: w.shape()[2],
        stride,
        pad,
    }
}

pub(crate) fn forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = geometry_of(x, w, stride, pad);
    let [n, _, _, _] = x.shape();
    let out_c = w.shape()[0];
    let mut out = Tensor::zeros([n, out_c, g.out_height(), g.out_width()]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.rows() * g.cols()]
    };
    let in_len = x.sample_len();
    let out_len = out.sample_len();
    for i in 0..n {
        let xs = &x.data()[i * in_len..(i + 1) * in_len];
        let cols_ref: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, &g, &mut cols);
            &cols
        };
        let dst = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
        gemm(out_c, g.rows(), g.cols(), w.data(), false, cols_ref, false, dst, false);
        if let Some(b) = b {
            for (o, chunk) in dst.chunks_mut(g.cols()).enumerate() {
                let bias = b.data()[o];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Tensor<T>>,
    pub w: Option<Tensor<T>>,
    pub b: Option<Tensor<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_x: bool,
    need_w: bool,
) -> ConvGrads<T> {
    let g = geometry_of(x, w, stride, pad);
    let [n, _, _, _] = x.shape();
    let out_c = w.shape()[0];
    let mut gx = need_x.then(|| Tensor::zeros(x.shape()));
    let mut gw = need_w.then(|| Tensor::zeros(w.shape()));
    let mut gb = has_bias.then(|| Tensor::zeros([1, out_c, 1, 1]));
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.rows() * g.cols()]
    };
    let mut gcols = vec![T::zero(); g.rows() * g.cols()];
    let in_len = x.sample_len();
    let out_len = grad_out.sample_len();
    for i in 0..n {
        let go = &grad_out.data()[i * out_len..(i + 1) * out_len];
        if let Some(gb) = gb.as_mut() {
            for (o, chunk) in go.chunks(g.cols()).enumerate() {
                gb.data_mut()[o] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            let xs = &x.data()[i * in_len..(i + 1) * in_len];
            let cols_ref: &[T] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, &g, &mut cols);
                &cols
            };
            gemm(
                out_c,
                g.cols(),
                g.rows(),
                go,
                false,
                cols_ref,
                true,
                gw.data_mut(),
                true,
            );
        }
        if let Some(gx) = gx.as_mut() {
            let dst = &mut gx.data_mut()[i * in_len..(i + 1) * in_len];
            if g.is_pointwise() {
                gemm(g.rows(), out_c, g.cols(), w.data(), true, go, false, dst, true);
            } else {
                gemm(g.rows(), out_c, g.cols(), w.data(), true, go, false, &mut gcols, false);
                col2im(&gcols, &g, dst);
            }
        }
    }
    ConvGrads { x: gx, w: gw, b: gb }
}

/// Direct nested-loop convolution, used as an oracle in tests.
#[cfg(test)]
pub(crate) fn naive<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = geometry_of(x, w, stride, pad);
    let [n, c, h, wd] = x.shape();
    let [o, _, k, _] = w.shape();
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut out = Vec::with_capacity(n * o * oh * ow);
    for bi in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map(|b| b.data()[oc]).unwrap_or(T::zero());
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += w.at(oc, ic, ky, kx) * x.at(bi, ic, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::from_vec([n, o, oh, ow], out).unwrap()
}
