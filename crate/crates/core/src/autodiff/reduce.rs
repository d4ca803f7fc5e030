use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use crate::error::{bail, Result};
use crate::tensor::{numel, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// For every input element (row-major), its flat offset in the reduced output.
fn output_offsets(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut out_stride = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        if !axes.contains(&d) {
            out_stride[d] = acc;
            acc *= shape[d];
        }
    }
    let n = numel(shape);
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += out_stride[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= out_stride[d] * shape[d];
            idx[d] = 0;
        }
    }
    offsets
}

fn reduced_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|(d, _)| !axes.contains(d))
        .map(|(_, &e)| e)
        .collect()
}

fn check_axes(rank: usize, axes: &[usize]) -> Result<()> {
    if axes.is_empty() {
        bail!(Domain, "empty reduction: no axes given");
    }
    for (i, &a) in axes.iter().enumerate() {
        if a >= rank {
            bail!(Dimension, "axis {} out of range for rank {}", a, rank);
        }
        if axes[..i].contains(&a) {
            bail!(Dimension, "axis {} listed twice", a);
        }
    }
    Ok(())
}

struct SumAxesRule {
    in_shape: Vec<usize>,
    axes: Vec<usize>,
}

impl<T: Real> Backward<T> for SumAxesRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.broadcast_axes(&self.in_shape, &self.axes)?)])
    }
}

struct BroadcastRule {
    axes: Vec<usize>,
}

impl<T: Real> Backward<T> for BroadcastRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.sum_axes(&self.axes)?)])
    }
}

impl<T: Real> Var<T> {
    /// Sums over `axes`, removing them from the shape. Summation runs in
    /// row-major input order, so results are reproducible bit for bit.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Var<T>> {
        check_axes(self.shape().len(), axes)?;
        let in_shape = self.shape().to_vec();
        let out_shape = reduced_shape(&in_shape, axes);
        let mut out = vec![T::zero(); numel(&out_shape)];
        for (&v, off) in self.data().iter().zip(output_offsets(&in_shape, axes)) {
            out[off] = out[off] + v;
        }
        Ok(Var::record(
            Tensor::from_parts(out_shape, out),
            vec![self.clone()],
            SumAxesRule {
                in_shape,
                axes: axes.to_vec(),
            },
        ))
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Var<T>> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.scale(1.0 / count as f64))
    }

    /// Inverse of [`Var::sum_axes`]'s shape rule: repeats `self` along the
    /// `axes` of `target`.
    pub fn broadcast_axes(&self, target: &[usize], axes: &[usize]) -> Result<Var<T>> {
        check_axes(target.len(), axes)?;
        if reduced_shape(target, axes) != self.shape() {
            bail!(
                Dimension,
                "cannot broadcast {:?} to {:?} along {:?}",
                self.shape(),
                target,
                axes
            );
        }
        let src = self.data();
        let out: Vec<T> = output_offsets(target, axes).into_iter().map(|o| src[o]).collect();
        Ok(Var::record(
            Tensor::from_parts(target.to_vec(), out),
            vec![self.clone()],
            BroadcastRule { axes: axes.to_vec() },
        ))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&self) -> Result<Var<T>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        if axes.is_empty() {
            return Ok(self.clone());
        }
        self.sum_axes(&axes)
    }

    pub fn mean(&self) -> Result<Var<T>> {
        let n = self.numel();
        Ok(self.sum()?.scale(1.0 / n as f64))
    }

    /// `axes = None` reduces over everything.
    pub fn reduce(&self, kind: Reduction, axes: Option<&[usize]>) -> Result<Var<T>> {
        match (kind, axes) {
            (Reduction::Sum, None) => self.sum(),
            (Reduction::Mean, None) => self.mean(),
            (Reduction::Sum, Some(a)) => self.sum_axes(a),
            (Reduction::Mean, Some(a)) => self.mean_axes(a),
        }
    }

    /// Euclidean norm of each sample over all non-batch axes: `[N, ...] -> [N]`.
    pub fn l2_norm_per_sample(&self) -> Result<Var<T>> {
        let rank = self.shape().len();
        if rank < 2 {
            bail!(Dimension, "per-sample norm needs a batch axis and at least one more, got {:?}", self.shape());
        }
        let axes: Vec<usize> = (1..rank).collect();
        self.square().sum_axes(&axes)?.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::backward;

    fn t(shape: &[usize], data: &[f64]) -> Var<f64> {
        Var::leaf(Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
    }

    #[test]
    fn mean_of_three() {
        assert_eq!(t(&[3], &[1.0, 2.0, 3.0]).mean().unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn batch_mean_shape() {
        let x = t(&[4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let m = x.mean_axes(&[0]).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert_eq!(m.data(), &[4.0, 5.0]);
    }

    #[test]
    fn middle_axis_sum() {
        let x = t(&[2, 3, 2], &(0..12).map(f64::from).collect::<Vec<_>>());
        let s = x.sum_axes(&[1]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[6.0, 9.0, 24.0, 27.0]);
        let b = s.broadcast_axes(&[2, 3, 2], &[1]).unwrap();
        assert_eq!(&b.data()[..4], &[6.0, 9.0, 6.0, 9.0]);
    }

    #[test]
    fn sum_backward_spreads_ones() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        backward(&x.sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn empty_axes_is_a_domain_error() {
        let x = t(&[2], &[1.0, 2.0]);
        assert!(matches!(x.sum_axes(&[]), Err(crate::Error::Domain(_))));
        assert!(matches!(x.sum_axes(&[1]), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn l2_norm_cases() {
        assert_eq!(t(&[1, 2], &[3.0, 4.0]).l2_norm_per_sample().unwrap().data(), &[5.0]);
        let m = 27;
        let ones = t(&[1, 1, 3, 3, 3], &[1.0; 27]);
        let n = ones.l2_norm_per_sample().unwrap().item().unwrap();
        assert!((n - (m as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn l2_norm_gradient_at_zero_is_zero() {
        let x = t(&[1, 3], &[0.0, 0.0, 0.0]);
        backward(&x.l2_norm_per_sample().unwrap().sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.0; 3]);
    }
}
