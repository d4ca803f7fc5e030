//! 3-D cross-correlation with zero padding, its adjoint (transposed
//! convolution) and its weight gradient. The three maps are bilinear and
//! close under differentiation: the backward rule of each is expressed with
//! the other two, which gives second-order gradients for free.

use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use super::linalg::{gemm, transpose};
use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

/// Output extent of a convolution, `None` when it would not be positive.
pub fn conv3d_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Output extent of a transposed convolution, `(d - 1) s - 2p + k`.
pub fn conv_transpose3d_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return None;
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * padding {
        return None;
    }
    Some(full - 2 * padding)
}

/// Geometry of the forward convolution `[N, B, inp] -> [N, A, out]` with
/// weight `[A, B, k, k, k]`.
#[derive(Clone, Debug, PartialEq)]
struct Geom {
    n: usize,
    a: usize,
    b: usize,
    inp: [usize; 3],
    out: [usize; 3],
    k: usize,
    s: usize,
    p: usize,
}

impl Geom {
    fn in_shape(&self) -> Vec<usize> {
        vec![self.n, self.b, self.inp[0], self.inp[1], self.inp[2]]
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.a, self.out[0], self.out[1], self.out[2]]
    }

    fn weight_shape(&self) -> Vec<usize> {
        vec![self.a, self.b, self.k, self.k, self.k]
    }

    fn in_size(&self) -> usize {
        self.inp.iter().product()
    }

    fn out_size(&self) -> usize {
        self.out.iter().product()
    }

    /// For each kernel offset along `axis`, the half-open range of output
    /// positions whose input tap falls inside the unpadded input.
    fn ranges(&self, axis: usize) -> Vec<(usize, usize)> {
        let (inp, out, s, p) = (self.inp[axis], self.out[axis], self.s, self.p);
        (0..self.k)
            .map(|kk| {
                let lo = if p > kk { (p - kk).div_ceil(s) } else { 0 };
                let hi = if inp + p > kk { ((inp - 1 + p - kk) / s + 1).min(out) } else { 0 };
                (lo, hi.max(lo))
            })
            .collect()
    }
}

struct Taps {
    d: Vec<(usize, usize)>,
    h: Vec<(usize, usize)>,
    w: Vec<(usize, usize)>,
}

impl Taps {
    fn new(g: &Geom) -> Self {
        Self {
            d: g.ranges(0),
            h: g.ranges(1),
            w: g.ranges(2),
        }
    }
}

/// Visits every (output offset, input offset) pair touched by kernel tap
/// `(kd, kh, kw)`, one contiguous output row at a time.
#[inline]
fn for_each_row(g: &Geom, taps: &Taps, kd: usize, kh: usize, kw: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (s, p) = (g.s, g.p);
    let (od0, od1) = taps.d[kd];
    let (oh0, oh1) = taps.h[kh];
    let (ow0, ow1) = taps.w[kw];
    if ow0 >= ow1 {
        return;
    }
    for od in od0..od1 {
        let id = od * s + kd - p;
        for oh in oh0..oh1 {
            let ih = oh * s + kh - p;
            let orow = (od * g.out[1] + oh) * g.out[2];
            let irow = (id * g.inp[1] + ih) * g.inp[2];
            f(orow + ow0, irow + ow0 * s + kw - p, ow1 - ow0);
        }
    }
}

/// Unfolds one sample `[B, inp]` into columns `[B * k^3, out]`; taps that
/// land in the padding stay zero.
fn im2col<T: Real>(xi: &[T], g: &Geom, taps: &Taps) -> Vec<T> {
    let (isz, osz, k) = (g.in_size(), g.out_size(), g.k);
    let s = g.s;
    let mut col = vec![T::zero(); g.b * k * k * k * osz];
    for b in 0..g.b {
        let xb = &xi[b * isz..][..isz];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let r = ((b * k + kd) * k + kh) * k + kw;
                    let row = &mut col[r * osz..][..osz];
                    for_each_row(g, taps, kd, kh, kw, |o, i, len| {
                        for (d, &v) in row[o..o + len].iter_mut().zip(xb[i..].iter().step_by(s)) {
                            *d = v;
                        }
                    });
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `xo`.
fn col2im<T: Real>(col: &[T], xo: &mut [T], g: &Geom, taps: &Taps) {
    let (isz, osz, k) = (g.in_size(), g.out_size(), g.k);
    let s = g.s;
    for b in 0..g.b {
        let xb = &mut xo[b * isz..][..isz];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let r = ((b * k + kd) * k + kh) * k + kw;
                    let row = &col[r * osz..][..osz];
                    for_each_row(g, taps, kd, kh, kw, |o, i, len| {
                        for (d, &v) in xb[i..].iter_mut().step_by(s).zip(&row[o..o + len]) {
                            *d = *d + v;
                        }
                    });
                }
            }
        }
    }
}

fn conv_forward<T: Real>(x: &[T], w: &[T], g: &Geom) -> Vec<T> {
    let (isz, osz) = (g.b * g.in_size(), g.a * g.out_size());
    let rows = g.b * g.k * g.k * g.k;
    let taps = Taps::new(g);
    let mut y = Vec::with_capacity(g.n * osz);
    for n in 0..g.n {
        let col = im2col(&x[n * isz..][..isz], g, &taps);
        y.extend(gemm(w, &col, g.a, rows, g.out_size()));
    }
    y
}

/// Adjoint of [`conv_forward`] in its input: `[N, A, out] -> [N, B, inp]`.
fn conv_adjoint<T: Real>(gy: &[T], w: &[T], g: &Geom) -> Vec<T> {
    let (isz, osz) = (g.b * g.in_size(), g.a * g.out_size());
    let rows = g.b * g.k * g.k * g.k;
    let taps = Taps::new(g);
    let wt = transpose(w, g.a, rows);
    let mut x = vec![T::zero(); g.n * isz];
    for n in 0..g.n {
        let col = gemm(&wt, &gy[n * osz..][..osz], rows, g.a, g.out_size());
        col2im(&col, &mut x[n * isz..][..isz], g, &taps);
    }
    x
}

/// Gradient of [`conv_forward`] in its weight: `[A, B, k, k, k]`.
fn conv_weight_grad<T: Real>(x: &[T], gy: &[T], g: &Geom) -> Vec<T> {
    let (isz, osz) = (g.b * g.in_size(), g.a * g.out_size());
    let rows = g.b * g.k * g.k * g.k;
    let taps = Taps::new(g);
    let mut w = vec![T::zero(); g.a * rows];
    for n in 0..g.n {
        let colt = transpose(&im2col(&x[n * isz..][..isz], g, &taps), rows, g.out_size());
        let part = gemm(&gy[n * osz..][..osz], &colt, g.a, g.out_size(), rows);
        for (d, v) in w.iter_mut().zip(part) {
            *d = *d + v;
        }
    }
    w
}

struct ConvRule(Geom);
impl<T: Real> Backward<T> for ConvRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let (x, w) = (&ctx.inputs[0], &ctx.inputs[1]);
        let dx = if ctx.needs[0] { Some(conv_adjoint_op(ctx.cot, w, &self.0)) } else { None };
        let dw = if ctx.needs[1] { Some(conv_weight_grad_op(x, ctx.cot, &self.0)) } else { None };
        Ok(vec![dx, dw])
    }
}

struct AdjointRule(Geom);
impl<T: Real> Backward<T> for AdjointRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let (gy, w) = (&ctx.inputs[0], &ctx.inputs[1]);
        let dg = if ctx.needs[0] { Some(conv_op(ctx.cot, w, &self.0)) } else { None };
        let dw = if ctx.needs[1] { Some(conv_weight_grad_op(ctx.cot, gy, &self.0)) } else { None };
        Ok(vec![dg, dw])
    }
}

struct WeightGradRule(Geom);
impl<T: Real> Backward<T> for WeightGradRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let (x, gy) = (&ctx.inputs[0], &ctx.inputs[1]);
        let dx = if ctx.needs[0] { Some(conv_adjoint_op(gy, ctx.cot, &self.0)) } else { None };
        let dg = if ctx.needs[1] { Some(conv_op(x, ctx.cot, &self.0)) } else { None };
        Ok(vec![dx, dg])
    }
}

fn conv_op<T: Real>(x: &Var<T>, w: &Var<T>, g: &Geom) -> Var<T> {
    let y = conv_forward(x.data(), w.data(), g);
    Var::record(
        Tensor::from_parts(g.out_shape(), y),
        vec![x.clone(), w.clone()],
        ConvRule(g.clone()),
    )
}

fn conv_adjoint_op<T: Real>(gy: &Var<T>, w: &Var<T>, g: &Geom) -> Var<T> {
    let x = conv_adjoint(gy.data(), w.data(), g);
    Var::record(
        Tensor::from_parts(g.in_shape(), x),
        vec![gy.clone(), w.clone()],
        AdjointRule(g.clone()),
    )
}

fn conv_weight_grad_op<T: Real>(x: &Var<T>, gy: &Var<T>, g: &Geom) -> Var<T> {
    let w = conv_weight_grad(x.data(), gy.data(), g);
    Var::record(
        Tensor::from_parts(g.weight_shape(), w),
        vec![x.clone(), gy.clone()],
        WeightGradRule(g.clone()),
    )
}

fn check_weight(weight: &[usize]) -> Result<usize> {
    if weight.len() != 5 || weight[2] != weight[3] || weight[3] != weight[4] {
        bail!(Dimension, "weight must be [out, in, k, k, k], got {:?}", weight);
    }
    Ok(weight[2])
}

impl<T: Real> Var<T> {
    /// Cross-correlation of `[N, Cin, D, H, W]` with `[Cout, Cin, k, k, k]`.
    pub fn conv3d(&self, weight: &Var<T>, bias: Option<&Var<T>>, stride: usize, padding: usize) -> Result<Var<T>> {
        let (xs, ws) = (self.shape(), weight.shape());
        let k = check_weight(ws)?;
        if xs.len() != 5 || xs[1] != ws[1] {
            bail!(Dimension, "conv3d input {:?} does not fit weight {:?}", xs, ws);
        }
        let mut out = [0usize; 3];
        for d in 0..3 {
            out[d] = match conv3d_output_extent(xs[2 + d], k, stride, padding) {
                Some(e) => e,
                None => bail!(
                    Dimension,
                    "conv3d output extent not positive (input {}, k {}, s {}, p {})",
                    xs[2 + d],
                    k,
                    stride,
                    padding
                ),
            };
        }
        let g = Geom {
            n: xs[0],
            a: ws[0],
            b: ws[1],
            inp: [xs[2], xs[3], xs[4]],
            out,
            k,
            s: stride,
            p: padding,
        };
        let y = conv_op(self, weight, &g);
        match bias {
            Some(b) => y.add_channel_bias(b),
            None => Ok(y),
        }
    }

    /// Transposed convolution of `[N, Cin, D, H, W]` with `[Cin, Cout, k, k, k]`:
    /// the adjoint of [`Var::conv3d`] with the same weight, stride and padding.
    pub fn conv_transpose3d(&self, weight: &Var<T>, bias: Option<&Var<T>>, stride: usize, padding: usize) -> Result<Var<T>> {
        let (xs, ws) = (self.shape(), weight.shape());
        let k = check_weight(ws)?;
        if xs.len() != 5 || xs[1] != ws[0] {
            bail!(Dimension, "conv_transpose3d input {:?} does not fit weight {:?}", xs, ws);
        }
        let mut full = [0usize; 3];
        for d in 0..3 {
            full[d] = match conv_transpose3d_output_extent(xs[2 + d], k, stride, padding) {
                Some(e) => e,
                None => bail!(
                    Dimension,
                    "conv_transpose3d output extent not positive (input {}, k {}, s {}, p {})",
                    xs[2 + d],
                    k,
                    stride,
                    padding
                ),
            };
        }
        let g = Geom {
            n: xs[0],
            a: ws[0],
            b: ws[1],
            inp: full,
            out: [xs[2], xs[3], xs[4]],
            k,
            s: stride,
            p: padding,
        };
        let y = conv_adjoint_op(self, weight, &g);
        match bias {
            Some(b) => y.add_channel_bias(b),
            None => Ok(y),
        }
    }
}
