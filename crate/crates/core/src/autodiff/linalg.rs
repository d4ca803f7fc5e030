use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

pub(super) fn transpose<T: Real>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// `[m, k] x [k, n]`, row-major. Narrow outputs go through row dot
/// products against the transposed right operand.
pub(super) fn gemm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    if n < 16 && k >= 16 {
        let bt = transpose(b, k, n);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            out.extend((0..n).map(|j| dot(arow, &bt[j * k..(j + 1) * k])));
        }
        return out;
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// Eight independent accumulators so the loop can vectorize.
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = acc[l] + a[l] * b[l];
        }
    }
    let mut tail = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail = tail + a * b;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

struct MatmulRule {
    ta: bool,
    tb: bool,
}

impl<T: Real> Backward<T> for MatmulRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.cot);
        let (ta, tb) = (self.ta, self.tb);
        let da = if !ctx.needs[0] {
            None
        } else if !ta {
            Some(g.matmul(b, false, !tb)?)
        } else {
            Some(b.matmul(g, tb, true)?)
        };
        let db = if !ctx.needs[1] {
            None
        } else if !tb {
            Some(a.matmul(g, !ta, false)?)
        } else {
            Some(g.matmul(a, true, ta)?)
        };
        Ok(vec![da, db])
    }
}

impl<T: Real> Var<T> {
    /// `op(self) . op(other)` for 2-D operands, where `op` transposes when
    /// the matching flag is set.
    pub fn matmul(&self, other: &Var<T>, transpose_self: bool, transpose_other: bool) -> Result<Var<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 {
            bail!(Dimension, "matmul needs 2-D operands, got {:?} and {:?}", sa, sb);
        }
        let (m, ka) = if transpose_self { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (kb, n) = if transpose_other { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if ka != kb {
            bail!(Dimension, "matmul inner extents differ: {} vs {}", ka, kb);
        }
        let a_owned;
        let a = if transpose_self {
            a_owned = transpose(self.data(), sa[0], sa[1]);
            &a_owned[..]
        } else {
            self.data()
        };
        let b_owned;
        let b = if transpose_other {
            b_owned = transpose(other.data(), sb[0], sb[1]);
            &b_owned[..]
        } else {
            other.data()
        };
        let out = gemm(a, b, m, ka, n);
        Ok(Var::record(
            Tensor::from_parts(vec![m, n], out),
            vec![self.clone(), other.clone()],
            MatmulRule {
                ta: transpose_self,
                tb: transpose_other,
            },
        ))
    }

    /// Adds a per-channel bias `[C]` to `[N, C, ...]`.
    pub fn add_channel_bias(&self, bias: &Var<T>) -> Result<Var<T>> {
        let shape = self.shape();
        if shape.len() < 2 || bias.shape() != [shape[1]] {
            bail!(Dimension, "bias {:?} does not match channels of {:?}", bias.shape(), shape);
        }
        let axes: Vec<usize> = (0..shape.len()).filter(|&d| d != 1).collect();
        self.add(&bias.broadcast_axes(shape, &axes)?)
    }

    /// Affine map `x W^T + b` with `x: [N, F]`, `W: [O, F]`, `b: [O]`.
    pub fn dense(&self, weight: &Var<T>, bias: Option<&Var<T>>) -> Result<Var<T>> {
        if self.shape().len() != 2 || weight.shape().len() != 2 || self.shape()[1] != weight.shape()[1] {
            bail!(
                Dimension,
                "dense input {:?} does not fit weight {:?}",
                self.shape(),
                weight.shape()
            );
        }
        let y = self.matmul(weight, false, true)?;
        match bias {
            Some(b) => y.add_channel_bias(b),
            None => Ok(y),
        }
    }
}
