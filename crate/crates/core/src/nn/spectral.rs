//! Spectral normalization by power iteration.

use alloc::vec::Vec;

use crate::autodiff::Var;
use crate::error::{bail, Result};
use crate::random::SeedStream;
use crate::tensor::{Real, Tensor};

/// Persisted left singular vector estimate of a weight viewed as the matrix
/// `[first extent, product of remaining extents]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState<T> {
    pub u: Vec<T>,
    pub n_power_iterations: usize,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = num_traits::Float::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn matrix_dims(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        bail!(Dimension, "spectral norm needs a matrix-shaped weight, got {:?}", shape);
    }
    Ok((shape[0], shape[1..].iter().product()))
}

/// `v = normalize(W^T u)`; errors when `W^T u` vanishes.
fn right_vector<T: Real>(w: &[T], rows: usize, cols: usize, u: &[f64]) -> Result<Vec<f64>> {
    let mut v = alloc::vec![0.0; cols];
    for r in 0..rows {
        let ur = u[r];
        for (vc, &wv) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *vc += ur * wv.as_f64();
        }
    }
    if normalize(&mut v) == 0.0 || !v.iter().all(|x| x.is_finite()) {
        bail!(Domain, "spectral norm of a zero weight matrix");
    }
    Ok(v)
}

fn times<T: Real>(w: &[T], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(&a, &b)| a.as_f64() * b)
                .sum()
        })
        .collect()
}

impl<T: Real> SpectralState<T> {
    /// Random unit `u` for a weight with `rows` leading extent.
    pub fn new(rows: usize, n_power_iterations: usize, stream: &mut SeedStream) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| stream.normal()).collect();
        if normalize(&mut u) == 0.0 {
            u[0] = 1.0;
        }
        Self {
            u: u.into_iter().map(T::lit).collect(),
            n_power_iterations,
        }
    }

    /// Runs `iterations` power-iteration steps on `weight`, storing the new
    /// `u`, and returns the estimate `sigma = u^T W v`.
    pub fn update(&mut self, weight: &Tensor<T>, iterations: usize) -> Result<f64> {
        let (rows, cols) = matrix_dims(weight.shape())?;
        if rows != self.u.len() {
            bail!(Dimension, "spectral state has {} rows, weight has {}", self.u.len(), rows);
        }
        let w = weight.data();
        let mut u: Vec<f64> = self.u.iter().map(|x| x.as_f64()).collect();
        for _ in 0..iterations {
            let v = right_vector(w, rows, cols, &u)?;
            u = times(w, rows, cols, &v);
            if normalize(&mut u) == 0.0 {
                bail!(Domain, "spectral norm of a zero weight matrix");
            }
        }
        // sigma = u^T W v = |W^T u| for v = W^T u / |W^T u|
        let v = right_vector(w, rows, cols, &u)?;
        let wv = times(w, rows, cols, &v);
        let sigma: f64 = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
        self.u = u.into_iter().map(T::lit).collect();
        if !(sigma > 0.0) {
            bail!(Domain, "non-positive spectral norm estimate {sigma}");
        }
        Ok(sigma)
    }

    /// Current estimate without advancing the iteration.
    pub fn sigma(&self, weight: &Tensor<T>) -> Result<f64> {
        self.clone().update(weight, 0)
    }
}

/// Runs the state's power iterations and returns `W / sigma`, with `sigma`
/// held constant for differentiation.
pub fn spectral_normalize<T: Real>(weight: &Var<T>, state: &mut SpectralState<T>) -> Result<Var<T>> {
    let sigma = state.update(weight.value(), state.n_power_iterations)?;
    Ok(weight.scale(1.0 / sigma))
}
