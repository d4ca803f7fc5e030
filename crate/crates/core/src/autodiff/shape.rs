use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use crate::error::{bail, Result};
use crate::tensor::Real;
use crate::tensor::Tensor;

struct ReshapeRule {
    in_shape: Vec<usize>,
}

impl<T: Real> Backward<T> for ReshapeRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.reshape(&self.in_shape)?)])
    }
}

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct DiffRule {
    axis: usize,
}

impl<T: Real> Backward<T> for DiffRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.forward_diff_adjoint(self.axis)?)])
    }
}

struct DiffAdjointRule {
    axis: usize,
}

impl<T: Real> Backward<T> for DiffAdjointRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.forward_diff(self.axis)?)])
    }
}

impl<T: Real> Var<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<T>> {
        let value = self.value().reshape(shape)?;
        Ok(Var::record(
            value,
            vec![self.clone()],
            ReshapeRule {
                in_shape: self.shape().to_vec(),
            },
        ))
    }

    /// `x[i+1] - x[i]` along `axis`; the axis shrinks by one.
    pub fn forward_diff(&self, axis: usize) -> Result<Var<T>> {
        let shape = self.shape();
        if axis >= shape.len() {
            bail!(Dimension, "axis {} out of range for {:?}", axis, shape);
        }
        if shape[axis] < 2 {
            bail!(Domain, "finite difference along axis {} of extent {}", axis, shape[axis]);
        }
        let (outer, len, inner) = split(shape, axis);
        let src = self.data();
        let mut out = Vec::with_capacity(outer * (len - 1) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            for i in 0..len - 1 {
                let a = base + i * inner;
                let b = a + inner;
                out.extend((0..inner).map(|j| src[b + j] - src[a + j]));
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] -= 1;
        Ok(Var::record(
            Tensor::from_parts(out_shape, out),
            vec![self.clone()],
            DiffRule { axis },
        ))
    }

    /// Transpose of [`Var::forward_diff`]; the axis grows by one.
    pub(crate) fn forward_diff_adjoint(&self, axis: usize) -> Result<Var<T>> {
        let shape = self.shape();
        let (outer, m, inner) = split(shape, axis);
        let len = m + 1;
        let src = self.data();
        let mut out = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for i in 0..m {
                let g = o * m * inner + i * inner;
                let lo = o * len * inner + i * inner;
                let hi = lo + inner;
                for j in 0..inner {
                    out[hi + j] = out[hi + j] + src[g + j];
                    out[lo + j] = out[lo + j] - src[g + j];
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] += 1;
        Ok(Var::record(
            Tensor::from_parts(out_shape, out),
            vec![self.clone()],
            DiffAdjointRule { axis },
        ))
    }
}
