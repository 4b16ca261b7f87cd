//! 2-D convolution and its two adjoints.
//!
//! With `Y = conv2d(X, W)`, the trilinear form `<Y', conv2d(X, W)>` has
//! partial derivatives `conv_transpose2d(Y', W)` (in X), `conv2d_weight(X, Y')`
//! (in W) and `conv2d(X, W)` (in Y'). Each op's backward is therefore a
//! combination of the other two, which closes the set under differentiation.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::record;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geom {
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(op: &'static str, (h, w): (usize, usize), (kh, kw): (usize, usize), stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(TensorError::InvalidShape {
                op,
                msg: format!("kernel {kh}x{kw} (stride {stride}, pad {pad}) does not fit {h}x{w}"),
            });
        }
        Ok(Self {
            kh,
            kw,
            stride,
            pad,
            h,
            w,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn out_len(&self) -> usize {
        self.ho * self.wo
    }

    /// Output columns `ox` whose input column `ox*stride + kx - pad` lies in `[0, w)`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kx >= self.pad { 0 } else { (self.pad - kx).div_ceil(s) };
        let limit = self.w + self.pad;
        let hi = if limit <= kx { 0 } else { ((limit - kx - 1) / s + 1).min(self.wo) };
        (lo.min(hi), hi)
    }
}

fn im2col<E: Element>(x: &[E], channels: usize, g: &Geom, cols: &mut [E]) {
    let (h, w, ho, wo) = (g.h, g.w, g.ho, g.wo);
    for c in 0..channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * ho * wo;
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..ho {
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize || lo >= hi {
                        dst.fill(E::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    dst[..lo].fill(E::zero());
                    dst[hi..].fill(E::zero());
                    let ix0 = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (d, ix) in dst[lo..hi].iter_mut().zip((ix0..).step_by(g.stride)) {
                            *d = src[ix];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<E: Element>(cols: &[E], channels: usize, g: &Geom, x: &mut [E]) {
    let (h, w, ho, wo) = (g.h, g.w, g.ho, g.wo);
    for c in 0..channels {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * ho * wo;
                let (lo, hi) = g.valid_cols(kx);
                if lo >= hi {
                    continue;
                }
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * wo + lo..row + oy * wo + hi];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let ix0 = lo * g.stride + kx - g.pad;
                    for (&v, ix) in src.iter().zip((ix0..).step_by(g.stride)) {
                        dst[ix] = dst[ix] + v;
                    }
                }
            }
        }
    }
}

fn conv_forward<E: Element>(x: &[E], w: &[E], n: usize, cin: usize, cout: usize, g: &Geom) -> Vec<E> {
    let k = cin * g.kh * g.kw;
    let (in_len, out_len) = (cin * g.h * g.w, cout * g.out_len());
    let mut out = vec![E::zero(); n * out_len];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![E::zero(); k * g.out_len()] };
    for i in 0..n {
        let xi = &x[i * in_len..(i + 1) * in_len];
        let b: &[E] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, cin, g, &mut cols);
            &cols
        };
        let ol = g.out_len() as isize;
        E::gemm(
            cout,
            k,
            g.out_len(),
            E::one(),
            w,
            (k as isize, 1),
            b,
            (ol, 1),
            E::zero(),
            &mut out[i * out_len..(i + 1) * out_len],
            (ol, 1),
        );
    }
    out
}

fn conv_transpose_forward<E: Element>(y: &[E], w: &[E], n: usize, cin: usize, cout: usize, g: &Geom) -> Vec<E> {
    let k = cin * g.kh * g.kw;
    let (in_len, out_len) = (cin * g.h * g.w, cout * g.out_len());
    let mut x = vec![E::zero(); n * in_len];
    let mut cols = vec![E::zero(); k * g.out_len()];
    let ol = g.out_len() as isize;
    for i in 0..n {
        let yi = &y[i * out_len..(i + 1) * out_len];
        let xi = &mut x[i * in_len..(i + 1) * in_len];
        if g.is_pointwise() {
            E::gemm(k, cout, g.out_len(), E::one(), w, (1, k as isize), yi, (ol, 1), E::zero(), xi, (ol, 1));
        } else {
            E::gemm(k, cout, g.out_len(), E::one(), w, (1, k as isize), yi, (ol, 1), E::zero(), &mut cols, (ol, 1));
            col2im(&cols, cin, g, xi);
        }
    }
    x
}

fn conv_weight_forward<E: Element>(x: &[E], y: &[E], n: usize, cin: usize, cout: usize, g: &Geom) -> Vec<E> {
    let k = cin * g.kh * g.kw;
    let (in_len, out_len) = (cin * g.h * g.w, cout * g.out_len());
    let mut dw = vec![E::zero(); cout * k];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![E::zero(); k * g.out_len()] };
    let ol = g.out_len() as isize;
    for i in 0..n {
        let xi = &x[i * in_len..(i + 1) * in_len];
        let b: &[E] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, cin, g, &mut cols);
            &cols
        };
        E::gemm(
            cout,
            g.out_len(),
            k,
            E::one(),
            &y[i * out_len..(i + 1) * out_len],
            (ol, 1),
            b,
            (1, ol),
            E::one(),
            &mut dw,
            (k as isize, 1),
        );
    }
    dw
}

impl<E: Element> Tensor<E> {
    /// Cross-correlation of `[N, Cin, H, W]` with `[Cout, Cin, kh, kw]`.
    pub fn conv2d(&self, weight: &Self, stride: usize, pad: usize) -> Result<Self> {
        self.expect_rank("conv2d", 4)?;
        weight.expect_rank("conv2d", 4)?;
        if self.dim(1) != weight.dim(1) {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let (n, cin, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
        let g = Geom::new("conv2d", (h, w), (kh, kw), stride, pad)?;
        let out = conv_forward(self.data(), weight.data(), n, cin, cout, &g);
        Ok(record("conv2d", vec![n, cout, g.ho, g.wo], out, &[self, weight], move |x, gr, needs| {
            Ok(vec![
                if needs[0] { Some(gr.conv_transpose2d(&x[1], stride, pad, (h, w))?) } else { None },
                if needs[1] { Some(x[0].conv2d_weight(gr, (kh, kw), stride, pad)?) } else { None },
            ])
        }))
    }

    /// Adjoint of [`Self::conv2d`] in its input: maps `[N, Cout, Ho, Wo]` back
    /// to `[N, Cin, out_hw.0, out_hw.1]` with weight `[Cout, Cin, kh, kw]`.
    pub fn conv_transpose2d(&self, weight: &Self, stride: usize, pad: usize, out_hw: (usize, usize)) -> Result<Self> {
        self.expect_rank("conv_transpose2d", 4)?;
        weight.expect_rank("conv_transpose2d", 4)?;
        let (cout, cin, kh, kw) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
        let g = Geom::new("conv_transpose2d", out_hw, (kh, kw), stride, pad)?;
        if self.dim(1) != cout || self.dim(2) != g.ho || self.dim(3) != g.wo {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let n = self.dim(0);
        let out = conv_transpose_forward(self.data(), weight.data(), n, cin, cout, &g);
        let shape = vec![n, cin, out_hw.0, out_hw.1];
        Ok(record("conv_transpose2d", shape, out, &[self, weight], move |x, gr, needs| {
            Ok(vec![
                if needs[0] { Some(gr.conv2d(&x[1], stride, pad)?) } else { None },
                if needs[1] { Some(gr.conv2d_weight(&x[0], (kh, kw), stride, pad)?) } else { None },
            ])
        }))
    }

    /// Adjoint of [`Self::conv2d`] in its weight: correlates input `self`
    /// `[N, Cin, H, W]` with output gradient `[N, Cout, Ho, Wo]`.
    pub fn conv2d_weight(&self, out_grad: &Self, kernel: (usize, usize), stride: usize, pad: usize) -> Result<Self> {
        self.expect_rank("conv2d_weight", 4)?;
        out_grad.expect_rank("conv2d_weight", 4)?;
        let (n, cin, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let g = Geom::new("conv2d_weight", (h, w), kernel, stride, pad)?;
        if out_grad.dim(0) != n || out_grad.dim(2) != g.ho || out_grad.dim(3) != g.wo {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d_weight",
                lhs: self.shape().to_vec(),
                rhs: out_grad.shape().to_vec(),
            });
        }
        let cout = out_grad.dim(1);
        let dw = conv_weight_forward(self.data(), out_grad.data(), n, cin, cout, &g);
        let shape = vec![cout, cin, kernel.0, kernel.1];
        Ok(record("conv2d_weight", shape, dw, &[self, out_grad], move |x, gr, needs| {
            Ok(vec![
                if needs[0] { Some(x[1].conv_transpose2d(gr, stride, pad, (h, w))?) } else { None },
                if needs[1] { Some(x[0].conv2d(gr, stride, pad)?) } else { None },
            ])
        }))
    }
}
