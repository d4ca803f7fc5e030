//! Adam and AdamW with bias-corrected moments.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::nn::Parameter;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
        }
    }
}

impl core::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            _ => bail!(Contract, "unknown optimizer `{s}`"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay; ignored by Adam.
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay: 0.01,
            ..Self::adam()
        }
    }

    pub fn of_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(),
            OptimizerKind::AdamW => Self::adamw(),
        }
    }
}

/// First and second moments, one tensor per parameter, and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

fn check_aligned<T: Real>(params: &[Tensor<T>], grads: &[Tensor<T>], state: &AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        bail!(
            Contract,
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        );
    }
    for (i, p) in params.iter().enumerate() {
        let s = p.shape();
        if grads[i].shape() != s || state.m[i].shape() != s || state.v[i].shape() != s {
            bail!(Contract, "parameter {i} of shape {:?} has misaligned gradient or state", s);
        }
    }
    Ok(())
}

fn step_impl<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &OptimizerConfig,
    decay: f64,
) -> Result<()> {
    check_aligned(params, grads, state)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, lr, eps) = (config.beta1, config.beta2, config.learning_rate, config.eps);
    let c1 = 1.0 - Float::powi(b1, t);
    let c2 = 1.0 - Float::powi(b2, t);
    let shrink = lr * decay;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (j, &gj) in g.data().iter().enumerate() {
            let gj = gj.as_f64();
            let mj = b1 * md[j].as_f64() + (1.0 - b1) * gj;
            let vj = b2 * vd[j].as_f64() + (1.0 - b2) * gj * gj;
            md[j] = T::lit(mj);
            vd[j] = T::lit(vj);
            let theta = pd[j].as_f64();
            let decayed = theta - theta * shrink;
            pd[j] = T::lit(decayed - lr * (mj / c1) / (Float::sqrt(vj / c2) + eps));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update in place.
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &OptimizerConfig,
) -> Result<()> {
    step_impl(params, grads, state, config, 0.0)
}

/// Adam plus the decoupled decay `θ ← θ - lr·wd·θ`.
pub fn adamw_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &OptimizerConfig,
) -> Result<()> {
    step_impl(params, grads, state, config, config.weight_decay)
}

/// Optimizer for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T: Real> {
    pub config: OptimizerConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Optimizer<T> {
    pub fn new<'a>(config: OptimizerConfig, params: impl IntoIterator<Item = &'a Parameter<T>>) -> Self {
        Self {
            config,
            state: AdamState::zeros(params.into_iter().map(|p| p.shape())),
        }
    }

    /// Updates the group from its accumulated gradients; a parameter without
    /// a gradient is stepped with a zero gradient.
    pub fn step(&mut self, params: &mut [&mut Parameter<T>]) -> Result<()> {
        let mut values: Vec<Tensor<T>> = params.iter().map(|p| p.value().clone()).collect();
        let grads: Vec<Tensor<T>> = params
            .iter()
            .map(|p| p.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        match self.config.kind {
            OptimizerKind::Adam => adam_step(&mut values, &grads, &mut self.state, &self.config)?,
            OptimizerKind::AdamW => adamw_step(&mut values, &grads, &mut self.state, &self.config)?,
        }
        for (p, v) in params.iter_mut().zip(values) {
            p.set(v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Tensor<f64>> {
        alloc::vec![Tensor::full(&[1], v)]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = one(0.5);
        let mut st = AdamState::zeros([&[1usize][..]]);
        adam_step(&mut p, &one(1.0), &mut st, &OptimizerConfig::adam()).unwrap();
        let delta = p[0].data()[0] - 0.5;
        assert!((delta + 0.0002 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn null_gradient_is_a_no_op() {
        let mut p = one(0.5);
        let mut st = AdamState::zeros([&[1usize][..]]);
        adam_step(&mut p, &one(0.0), &mut st, &OptimizerConfig::adam()).unwrap();
        assert_eq!(p[0].data()[0], 0.5);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = one(1.0);
        let mut st = AdamState::zeros([&[1usize][..]]);
        let mut last = 1.0;
        for _ in 0..50 {
            let theta = p[0].data()[0];
            adam_step(&mut p, &one(2.0 * theta), &mut st, &OptimizerConfig::adam()).unwrap();
            let f = p[0].data()[0].powi(2);
            assert!(f < last);
            last = f;
        }
    }

    #[test]
    fn pure_decay_step() {
        let mut p = one(1.0);
        let mut st = AdamState::zeros([&[1usize][..]]);
        adamw_step(&mut p, &one(0.0), &mut st, &OptimizerConfig::adamw()).unwrap();
        assert!((p[0].data()[0] - (1.0 - 2e-6)).abs() < 1e-15);
    }

    #[test]
    fn zero_decay_matches_adam_bitwise() {
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..OptimizerConfig::adamw()
        };
        let (mut a, mut b) = (one(0.3), one(0.3));
        let mut sa = AdamState::zeros([&[1usize][..]]);
        let mut sb = sa.clone();
        for g in [0.7, -1.1, 0.2] {
            adam_step(&mut a, &one(g), &mut sa, &cfg).unwrap();
            adamw_step(&mut b, &one(g), &mut sb, &cfg).unwrap();
        }
        assert_eq!(a[0].data()[0].to_bits(), b[0].data()[0].to_bits());
        assert_eq!(sa, sb);
    }

    #[test]
    fn decay_is_linear() {
        let cfg = OptimizerConfig::adamw();
        let mut a = one(0.37);
        let mut b = one(0.74);
        adamw_step(&mut a, &one(0.0), &mut AdamState::zeros([&[1usize][..]]), &cfg).unwrap();
        adamw_step(&mut b, &one(0.0), &mut AdamState::zeros([&[1usize][..]]), &cfg).unwrap();
        assert_eq!((0.74 - b[0].data()[0]), 2.0 * (0.37 - a[0].data()[0]));
    }

    #[test]
    fn misaligned_gradients_are_contract_errors() {
        let mut p = one(0.0);
        let mut st = AdamState::zeros([&[1usize][..]]);
        let g = alloc::vec![Tensor::<f64>::zeros(&[2])];
        assert!(matches!(
            adam_step(&mut p, &g, &mut st, &OptimizerConfig::adam()),
            Err(crate::Error::Contract(_))
        ));
    }
}
