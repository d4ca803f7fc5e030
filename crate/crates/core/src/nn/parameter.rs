use alloc::string::String;

use crate::autodiff::Var;
use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

/// A named trainable tensor. Updates swap in a fresh leaf, so graphs built
/// from the previous value stay valid.
pub struct Parameter<T: Real> {
    name: String,
    var: Var<T>,
}

impl<T: Real> Clone for Parameter<T> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            var: Var::leaf(self.var.value().clone()),
        }
    }
}

impl<T: Real> core::fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Parameter")
            .field("name", &self.name)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            var: Var::leaf(value),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.var.shape()
    }

    pub fn numel(&self) -> usize {
        self.var.numel()
    }

    pub fn value(&self) -> &Tensor<T> {
        self.var.value()
    }

    /// The differentiable leaf.
    pub fn var(&self) -> &Var<T> {
        &self.var
    }

    /// The value as a constant, for forwards that must not train this
    /// parameter.
    pub fn frozen(&self) -> Var<T> {
        self.var.detach()
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.var.grad().map(|g| g.value().clone())
    }

    pub fn zero_grad(&self) {
        self.var.zero_grad();
    }

    /// Replaces the value; the shape is fixed for the parameter's lifetime.
    pub fn set(&mut self, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.shape() {
            bail!(
                Contract,
                "parameter {} has shape {:?}, got {:?}",
                self.name,
                self.shape(),
                value.shape()
            );
        }
        self.var = Var::leaf(value);
        Ok(())
    }
}
