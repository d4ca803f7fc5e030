//! Multi-scale structural similarity on volumes with separable Gaussian
//! windows.

use alloc::vec::Vec;

use num_traits::Float;

use super::Summary;
use crate::error::{bail, Result};
use crate::random::SeedStream;
use crate::volume::VoxelGrid;

/// Standard five-scale exponents; fewer scales renormalize a prefix.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub scales: usize,
    /// Odd Gaussian window extent.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range; `None` uses the joint range of the two inputs.
    pub data_range: Option<f64>,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            scales: 3,
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: None,
        }
    }
}

impl SsimConfig {
    /// Largest default-style configuration whose coarsest scale still holds
    /// a window for volumes with smallest extent `extent`.
    pub fn for_extent(extent: usize) -> Self {
        let base = Self::default();
        for scales in (1..=base.scales).rev() {
            let coarse = extent >> (scales - 1);
            if coarse >= base.window {
                return Self { scales, ..base };
            }
            if coarse >= 7 {
                return Self { scales, window: 7, ..base };
            }
        }
        Self {
            scales: 1,
            window: (extent.max(1) - 1) | 1,
            ..base
        }
    }
}

#[derive(Clone)]
struct Field {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Field {
    fn of(g: &VoxelGrid) -> Self {
        Self {
            dims: g.dims(),
            data: g.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Valid correlation with `w` along `axis`.
    fn filter(&self, w: &[f64], axis: usize) -> Field {
        let mut dims = self.dims;
        dims[axis] = self.dims[axis] + 1 - w.len();
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let mut acc = 0.0;
                    for (t, &wt) in w.iter().enumerate() {
                        let mut p = [x, y, z];
                        p[axis] += t;
                        acc += wt * self.at(p[0], p[1], p[2]);
                    }
                    data.push(acc);
                }
            }
        }
        Field { dims, data }
    }

    fn blur(&self, w: &[f64]) -> Field {
        self.filter(w, 0).filter(w, 1).filter(w, 2)
    }

    /// 2×2×2 average pooling, dropping odd remainders.
    fn downsample(&self) -> Field {
        let dims = self.dims.map(|d| d / 2);
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let mut acc = 0.0;
                    for c in 0..8 {
                        acc += self.at(2 * x + (c & 1), 2 * y + ((c >> 1) & 1), 2 * z + ((c >> 2) & 1));
                    }
                    data.push(acc / 8.0);
                }
            }
        }
        Field { dims, data }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| Float::exp(-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Multi-scale SSIM in `[0, 1]`.
pub fn ms_ssim_3d(x: &VoxelGrid, y: &VoxelGrid, config: &SsimConfig) -> Result<f64> {
    if x.dims() != y.dims() {
        bail!(Contract, "volumes of extents {:?} and {:?}", x.dims(), y.dims());
    }
    let m = config.scales;
    if m == 0 || m > MS_SSIM_WEIGHTS.len() || config.window % 2 == 0 || !(config.sigma > 0.0) {
        bail!(Contract, "invalid similarity configuration {:?}", config);
    }
    if x.dims().iter().any(|&d| (d >> (m - 1)) < config.window) {
        bail!(
            Domain,
            "{m} scales with window {} do not fit extents {:?}",
            config.window,
            x.dims()
        );
    }
    let range = config.data_range.unwrap_or_else(|| {
        let (xl, xh) = x.range();
        let (yl, yh) = y.range();
        xh.max(yh) as f64 - xl.min(yl) as f64
    });
    let range = if range > 0.0 { range } else { 1.0 };
    let c1 = (config.k1 * range).powi(2);
    let c2 = (config.k2 * range).powi(2);
    let w = gaussian_window(config.window, config.sigma);
    let total: f64 = MS_SSIM_WEIGHTS[..m].iter().sum();

    let (mut fx, mut fy) = (Field::of(x), Field::of(y));
    let mut result = 1.0;
    for j in 0..m {
        let mx = fx.blur(&w);
        let my = fy.blur(&w);
        let sxx = fx.zip(&fx, |a, b| a * b).blur(&w);
        let syy = fy.zip(&fy, |a, b| a * b).blur(&w);
        let sxy = fx.zip(&fy, |a, b| a * b).blur(&w);
        let n = mx.data.len() as f64;
        let (mut cs_sum, mut ssim_sum) = (0.0, 0.0);
        for i in 0..mx.data.len() {
            let (ux, uy) = (mx.data[i], my.data[i]);
            let vx = sxx.data[i] - ux * ux;
            let vy = syy.data[i] - uy * uy;
            let cov = sxy.data[i] - ux * uy;
            let cs = (2.0 * cov + c2) / (vx + vy + c2);
            let l = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
            cs_sum += cs;
            ssim_sum += l * cs;
        }
        let value = if j + 1 == m { ssim_sum / n } else { cs_sum / n };
        result *= Float::powf(value.clamp(0.0, 1.0), MS_SSIM_WEIGHTS[j] / total);
        if j + 1 < m {
            fx = fx.downsample();
            fy = fy.downsample();
        }
    }
    Ok(result.clamp(0.0, 1.0))
}

/// Per trial, draws `batch` volumes and averages [`ms_ssim_3d`] over all
/// unordered pairs; summarizes the trial averages.
pub fn ms_ssim_batch_protocol(
    mut draw: impl FnMut(usize, &mut SeedStream) -> Result<Vec<VoxelGrid>>,
    n_trials: usize,
    batch: usize,
    config: &SsimConfig,
    stream: &mut SeedStream,
) -> Result<Summary> {
    if batch < 2 || n_trials == 0 {
        bail!(Contract, "protocol needs at least one trial of two or more volumes");
    }
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let set = draw(batch, stream)?;
        if set.len() != batch {
            bail!(Contract, "source yielded {} volumes, expected {batch}", set.len());
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..batch {
            for j in i + 1..batch {
                sum += ms_ssim_3d(&set[i], &set[j], config)?;
                pairs += 1;
            }
        }
        trials.push(sum / pairs as f64);
    }
    Summary::of(&trials)
}
