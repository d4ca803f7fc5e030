use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use crate::error::{bail, Result};
use crate::tensor::Real;

/// Pointwise nonlinearities. Kinks use the right-hand derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(&self, x: &Var<T>) -> Result<Var<T>> {
        match *self {
            Activation::Linear => Ok(x.clone()),
            Activation::Relu => Ok(x.relu()),
            Activation::LeakyRelu(slope) => x.leaky_relu(slope),
            Activation::Tanh => Ok(x.tanh()),
        }
    }
}

/// Multiplies the cotangent by a constant slope mask; the mask does not
/// depend differentiably on the input, so second derivatives vanish.
struct MaskRule<T> {
    negative_slope: T,
}

impl<T: Real> Backward<T> for MaskRule<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let s = self.negative_slope;
        let mask = Var::constant(ctx.inputs[0].value().map(|v| if v < T::zero() { s } else { T::one() }));
        Ok(vec![Some(ctx.cot.mul(&mask)?)])
    }
}

struct TanhRule;

impl<T: Real> Backward<T> for TanhRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        // 1 - tanh(x)^2
        let d = ctx.output.square().neg().add_scalar(1.0);
        Ok(vec![Some(ctx.cot.mul(&d)?)])
    }
}

impl<T: Real> Var<T> {
    pub fn relu(&self) -> Var<T> {
        Var::record(
            self.value().map(|v| if v < T::zero() { T::zero() } else { v }),
            vec![self.clone()],
            MaskRule { negative_slope: T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var<T>> {
        if !(slope > 0.0 && slope < 1.0) {
            bail!(Contract, "leaky_relu slope must lie in (0, 1), got {slope}");
        }
        let s = T::lit(slope);
        Ok(Var::record(
            self.value().map(|v| if v < T::zero() { v * s } else { v }),
            vec![self.clone()],
            MaskRule { negative_slope: s },
        ))
    }

    pub fn tanh(&self) -> Var<T> {
        Var::record(self.value().map(|v| v.tanh()), vec![self.clone()], TanhRule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::backward;
    use crate::tensor::Tensor;

    fn x(v: f64) -> Var<f64> {
        Var::leaf(Tensor::new(vec![1], vec![v]).unwrap())
    }

    #[test]
    fn leaky_relu_branches() {
        assert_eq!(x(1.0).leaky_relu(0.2).unwrap().item().unwrap(), 1.0);
        assert!((x(-1.0).leaky_relu(0.2).unwrap().item().unwrap() + 0.2).abs() < 1e-15);
        assert!(x(1.0).leaky_relu(1.5).is_err());
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let v = x(0.0);
        backward(&v.tanh().sum().unwrap(), false).unwrap();
        assert_eq!(v.grad().unwrap().item().unwrap(), 1.0);
    }

    #[test]
    fn relu_kink_uses_right_derivative() {
        let v = x(0.0);
        backward(&v.relu().sum().unwrap(), false).unwrap();
        assert_eq!(v.grad().unwrap().item().unwrap(), 1.0);
    }
}
