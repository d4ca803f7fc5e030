use alloc::vec;
use alloc::vec::Vec;

use super::{Backward, BackwardCtx, Var};
use crate::error::{bail, Result};
use crate::tensor::Real;
#[cfg(test)]
use crate::tensor::Tensor;

/// Pointwise operations. Binary kinds take a second tensor of equal shape;
/// `Scale` and `AddScalar` take a constant scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar(f64),
    Abs,
    Square,
    Sqrt,
    Neg,
}

/// Sign with the right-hand convention at zero.
fn sign<T: Real>(v: T) -> T {
    if v < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

struct AddRule;
impl<T: Real> Backward<T> for AddRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.clone()), Some(ctx.cot.clone())])
    }
}

struct SubRule;
impl<T: Real> Backward<T> for SubRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.clone()), Some(ctx.cot.neg())])
    }
}

struct MulRule;
impl<T: Real> Backward<T> for MulRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let (a, b) = (&ctx.inputs[0], &ctx.inputs[1]);
        let da = if ctx.needs[0] { Some(ctx.cot.mul(b)?) } else { None };
        let db = if ctx.needs[1] { Some(ctx.cot.mul(a)?) } else { None };
        Ok(vec![da, db])
    }
}

struct DivRule;
impl<T: Real> Backward<T> for DivRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let b = &ctx.inputs[1];
        let da = ctx.cot.div(b)?;
        let db = ctx.cot.mul(ctx.output)?.div(b)?.neg();
        Ok(vec![Some(da), Some(db)])
    }
}

struct ScaleRule<T>(T);
impl<T: Real> Backward<T> for ScaleRule<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.scale_by(self.0))])
    }
}

struct PassRule;
impl<T: Real> Backward<T> for PassRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.clone())])
    }
}

struct AbsRule;
impl<T: Real> Backward<T> for AbsRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let s = Var::constant(ctx.inputs[0].value().map(sign));
        Ok(vec![Some(ctx.cot.mul(&s)?)])
    }
}

struct SquareRule;
impl<T: Real> Backward<T> for SquareRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.mul(&ctx.inputs[0])?.scale_by(T::lit(2.0)))])
    }
}

struct SqrtRule;
impl<T: Real> Backward<T> for SqrtRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let inv = ctx.output.recip_or_zero().scale_by(T::lit(0.5));
        Ok(vec![Some(ctx.cot.mul(&inv)?)])
    }
}

struct RecipRule;
impl<T: Real> Backward<T> for RecipRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(ctx.cot.mul(&ctx.output.square())?.neg())])
    }
}

struct PowRule<T>(T);
impl<T: Real> Backward<T> for PowRule<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Result<Vec<Option<Var<T>>>> {
        let d = ctx.inputs[0].powf(self.0 - T::one()).scale_by(self.0);
        Ok(vec![Some(ctx.cot.mul(&d)?)])
    }
}

impl<T: Real> Var<T> {
    fn binary(&self, other: &Var<T>, f: impl Fn(T, T) -> T, rule: impl Backward<T> + 'static) -> Result<Var<T>> {
        let value = self.value().zip_map(other.value(), f)?;
        Ok(Var::record(value, vec![self.clone(), other.clone()], rule))
    }

    fn unary(&self, f: impl Fn(T) -> T, rule: impl Backward<T> + 'static) -> Var<T> {
        Var::record(self.value().map(f), vec![self.clone()], rule)
    }

    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        self.binary(other, |a, b| a + b, AddRule)
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        self.binary(other, |a, b| a - b, SubRule)
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        self.binary(other, |a, b| a * b, MulRule)
    }

    pub fn div(&self, other: &Var<T>) -> Result<Var<T>> {
        self.binary(other, |a, b| a / b, DivRule)
    }

    pub fn neg(&self) -> Var<T> {
        self.unary(|a| -a, ScaleRule(-T::one()))
    }

    pub fn scale_by(&self, s: T) -> Var<T> {
        self.unary(|a| a * s, ScaleRule(s))
    }

    pub fn scale(&self, s: f64) -> Var<T> {
        self.scale_by(T::lit(s))
    }

    pub fn add_scalar(&self, s: f64) -> Var<T> {
        let s = T::lit(s);
        self.unary(|a| a + s, PassRule)
    }

    pub fn abs(&self) -> Var<T> {
        self.unary(|a| a.abs(), AbsRule)
    }

    pub fn square(&self) -> Var<T> {
        self.unary(|a| a * a, SquareRule)
    }

    /// Square root; the gradient at exactly zero is defined as zero.
    pub fn sqrt(&self) -> Result<Var<T>> {
        if let Some(v) = self.data().iter().find(|v| **v < T::zero()) {
            bail!(Domain, "sqrt of negative value {}", v);
        }
        Ok(self.unary(|a| a.sqrt(), SqrtRule))
    }

    /// `1/x`, with `0` mapped to `0`.
    pub(crate) fn recip_or_zero(&self) -> Var<T> {
        self.unary(
            |a| if a == T::zero() { T::zero() } else { T::one() / a },
            RecipRule,
        )
    }

    pub fn powf(&self, exponent: T) -> Var<T> {
        self.unary(|a| a.powf(exponent), PowRule(exponent))
    }

    /// Dispatches on [`Elementwise`]; `other` is required for binary kinds.
    pub fn elementwise(&self, other: Option<&Var<T>>, kind: Elementwise) -> Result<Var<T>> {
        let need = || match other {
            Some(o) => Ok(o),
            None => Err(crate::Error::Contract(alloc::format!("{kind:?} needs a second operand"))),
        };
        match kind {
            Elementwise::Add => self.add(need()?),
            Elementwise::Sub => self.sub(need()?),
            Elementwise::Mul => self.mul(need()?),
            Elementwise::Div => self.div(need()?),
            Elementwise::Scale(s) => Ok(self.scale(s)),
            Elementwise::AddScalar(s) => Ok(self.add_scalar(s)),
            Elementwise::Abs => Ok(self.abs()),
            Elementwise::Square => Ok(self.square()),
            Elementwise::Sqrt => self.sqrt(),
            Elementwise::Neg => Ok(self.neg()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::backward;

    fn var(data: &[f64]) -> Var<f64> {
        Var::leaf(Tensor::new(alloc::vec![data.len()], data.to_vec()).unwrap())
    }

    #[test]
    fn add_values() {
        let a = var(&[1.0, 2.0]);
        let b = var(&[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let a = var(&[1.0, 2.0]);
        let b = var(&[3.0]);
        assert!(matches!(a.add(&b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn abs_backward_uses_sign() {
        let x = var(&[-2.0, 0.0, 3.0]);
        backward(&x.abs().sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[-1.0, 1.0, 1.0]);
    }

    #[test]
    fn sqrt_of_negative_is_a_domain_error() {
        assert!(matches!(var(&[1.0, -1.0]).sqrt(), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn sqrt_gradient_at_zero_is_zero() {
        let x = var(&[0.0, 4.0]);
        backward(&x.sqrt().unwrap().sum().unwrap(), false).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 0.25]);
    }

    #[test]
    fn elementwise_dispatch_requires_operand() {
        assert!(var(&[1.0]).elementwise(None, Elementwise::Add).is_err());
        let y = var(&[2.0]).elementwise(None, Elementwise::Scale(3.0)).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }
}
