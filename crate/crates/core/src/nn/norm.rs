use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Var;
use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

pub const NORM_EPS: f64 = 1e-5;

fn spatial_axes(rank: usize) -> Vec<usize> {
    (2..rank).collect()
}

fn affine<T: Real>(y: Var<T>, gamma: &Var<T>, beta: &Var<T>) -> Result<Var<T>> {
    let shape = y.shape().to_vec();
    let axes: Vec<usize> = (0..shape.len()).filter(|&d| d != 1).collect();
    y.mul(&gamma.broadcast_axes(&shape, &axes)?)?
        .add(&beta.broadcast_axes(&shape, &axes)?)
}

/// Per-sample, per-channel standardization over the spatial axes of
/// `[N, C, D, H, W]`, then an optional channel affine `(gamma, beta)`.
pub fn instance_norm3d<T: Real>(x: &Var<T>, affine_params: Option<(&Var<T>, &Var<T>)>, eps: f64) -> Result<Var<T>> {
    let shape = x.shape().to_vec();
    if shape.len() < 3 {
        bail!(Dimension, "instance norm needs spatial axes, got {:?}", shape);
    }
    let axes = spatial_axes(shape.len());
    let count: usize = shape[2..].iter().product();
    if count < 2 {
        bail!(Domain, "instance norm over a single voxel");
    }
    let mean = x.mean_axes(&axes)?.broadcast_axes(&shape, &axes)?;
    let centered = x.sub(&mean)?;
    let var = centered.square().mean_axes(&axes)?;
    let std = var.add_scalar(eps).sqrt()?.broadcast_axes(&shape, &axes)?;
    let y = centered.div(&std)?;
    match affine_params {
        Some((g, b)) => affine(y, g, b),
        None => Ok(y),
    }
}

/// Running statistics of a batch normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub updates: u64,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            updates: 0,
            momentum: 0.1,
            eps: NORM_EPS,
        }
    }
}

/// Channel-wise normalization of `[N, C, ...]`. Training mode uses batch
/// statistics and folds them into the running estimates; evaluation uses the
/// running estimates as constants.
pub fn batch_norm3d<T: Real>(
    x: &Var<T>,
    affine_params: Option<(&Var<T>, &Var<T>)>,
    state: &mut BatchNormState<T>,
    training: bool,
) -> Result<Var<T>> {
    let shape = x.shape().to_vec();
    if shape.len() < 2 || shape[1] != state.running_mean.len() {
        bail!(Dimension, "batch norm over {} channels got input {:?}", state.running_mean.len(), shape);
    }
    let axes: Vec<usize> = (0..shape.len()).filter(|&d| d != 1).collect();
    let count: usize = axes.iter().map(|&d| shape[d]).product();
    let y = if training {
        if count < 2 {
            bail!(Domain, "batch norm in training mode needs at least two values per channel");
        }
        let mean = x.mean_axes(&axes)?;
        let centered = x.sub(&mean.broadcast_axes(&shape, &axes)?)?;
        let var = centered.square().mean_axes(&axes)?;
        let m = T::lit(state.momentum);
        let unbias = T::lit(count as f64 / (count as f64 - 1.0));
        for c in 0..shape[1] {
            state.running_mean[c] = (T::one() - m) * state.running_mean[c] + m * mean.data()[c];
            state.running_var[c] = (T::one() - m) * state.running_var[c] + m * var.data()[c] * unbias;
        }
        state.updates += 1;
        let std = var.add_scalar(state.eps).sqrt()?.broadcast_axes(&shape, &axes)?;
        centered.div(&std)?
    } else {
        if state.updates == 0 {
            bail!(Contract, "batch norm evaluated before any statistics update");
        }
        let c = shape[1];
        let mean = Var::constant(Tensor::new(vec![c], state.running_mean.clone())?);
        let std = Var::constant(Tensor::new(
            vec![c],
            state.running_var.iter().map(|&v| (v + T::lit(state.eps)).sqrt()).collect(),
        )?);
        x.sub(&mean.broadcast_axes(&shape, &axes)?)?
            .div(&std.broadcast_axes(&shape, &axes)?)?
    };
    match affine_params {
        Some((g, b)) => affine(y, g, b),
        None => Ok(y),
    }
}
