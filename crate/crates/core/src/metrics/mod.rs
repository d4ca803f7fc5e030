//! Image-quality and set-level metrics with the comparison protocols used to
//! evaluate a trained model.

mod evaluate;
mod ssim;

pub use evaluate::{evaluate_model, evaluate_sets, generate_volumes, reconstruct, MetricReport, ProtocolConfig};
pub use ssim::{ms_ssim_3d, ms_ssim_batch_protocol, SsimConfig, MS_SSIM_WEIGHTS};

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::random::SeedStream;
use crate::volume::VoxelGrid;

/// Mean and population standard deviation of a metric over comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            bail!(Contract, "summary of zero comparisons");
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: Float::sqrt(var),
            count: values.len(),
        })
    }
}

fn same_dims(x: &VoxelGrid, y: &VoxelGrid) -> Result<()> {
    if x.dims() != y.dims() {
        bail!(Contract, "volumes of extents {:?} and {:?}", x.dims(), y.dims());
    }
    Ok(())
}

/// Mean absolute voxel difference.
pub fn mae(x: &VoxelGrid, y: &VoxelGrid) -> Result<f64> {
    same_dims(x, y)?;
    let total: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| Float::abs(a as f64 - b as f64))
        .sum();
    Ok(total / x.len() as f64)
}

/// Pearson correlation of the flattened volumes.
pub fn ncc(x: &VoxelGrid, y: &VoxelGrid) -> Result<f64> {
    same_dims(x, y)?;
    let n = x.len() as f64;
    let mx = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (da, db) = (a as f64 - mx, b as f64 - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        bail!(Domain, "correlation with a constant volume");
    }
    Ok((sxy / Float::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Kernel of the discrepancy statistic on flattened volumes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// `k(a, b) = a·b`.
    Linear,
    /// `k(a, b) = exp(-‖a-b‖² / (2 h²))`.
    Gaussian { bandwidth: f64 },
}

fn check_set(set: &[&VoxelGrid], dims: [usize; 3]) -> Result<()> {
    if set.len() < 2 {
        bail!(Contract, "discrepancy needs at least two volumes per set, got {}", set.len());
    }
    if set.iter().any(|v| v.dims() != dims) {
        bail!(Contract, "volumes in a discrepancy set differ in extent");
    }
    Ok(())
}

fn sq_dist(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Biased squared maximum mean discrepancy between two sets of volumes.
pub fn mmd(a: &[&VoxelGrid], b: &[&VoxelGrid], kernel: Kernel) -> Result<f64> {
    let dims = a.first().map(|v| v.dims()).unwrap_or([0; 3]);
    check_set(a, dims)?;
    check_set(b, dims)?;
    match kernel {
        Kernel::Linear => {
            // For the linear kernel the estimate is the squared distance of
            // the set means.
            let len = a[0].len();
            let mut diff = alloc::vec![0.0f64; len];
            for v in a {
                diff.iter_mut().zip(v.data()).for_each(|(d, &x)| *d += x as f64 / a.len() as f64);
            }
            for v in b {
                diff.iter_mut().zip(v.data()).for_each(|(d, &x)| *d -= x as f64 / b.len() as f64);
            }
            Ok(diff.iter().map(|d| d * d).sum())
        }
        Kernel::Gaussian { bandwidth } => {
            if !(bandwidth > 0.0) {
                bail!(Contract, "Gaussian bandwidth must be positive");
            }
            let k = |x: &VoxelGrid, y: &VoxelGrid| Float::exp(-sq_dist(x, y) / (2.0 * bandwidth * bandwidth));
            let mean_k = |p: &[&VoxelGrid], q: &[&VoxelGrid]| {
                let mut s = 0.0;
                for x in p {
                    for y in q {
                        s += k(x, y);
                    }
                }
                s / (p.len() * q.len()) as f64
            };
            Ok((mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b)).max(0.0))
        }
    }
}

/// Overlap scores per foreground class, `None` where a class is absent from
/// both masks, plus the score of all foreground classes pooled.
#[derive(Clone, Debug, PartialEq)]
pub struct DiceScores {
    pub per_class: Vec<(u32, Option<f64>)>,
    pub global: Option<f64>,
}

/// Dice overlap of two label volumes. Label 0 is background; every other
/// label must be one of `classes`.
pub fn dice(a: &[u32], b: &[u32], classes: &[u32]) -> Result<DiceScores> {
    if a.len() != b.len() {
        bail!(Contract, "label volumes of {} and {} voxels", a.len(), b.len());
    }
    if classes.contains(&0) {
        bail!(Contract, "label 0 is background");
    }
    let slot = |l: u32| classes.iter().position(|&c| c == l);
    let mut inter = alloc::vec![0usize; classes.len()];
    let mut size_a = alloc::vec![0usize; classes.len()];
    let mut size_b = alloc::vec![0usize; classes.len()];
    for (&la, &lb) in a.iter().zip(b) {
        let (sa, sb) = (slot(la), slot(lb));
        if (la != 0 && sa.is_none()) || (lb != 0 && sb.is_none()) {
            bail!(Contract, "label outside the class set {:?}", classes);
        }
        if let Some(i) = sa {
            size_a[i] += 1;
            if sa == sb {
                inter[i] += 1;
            }
        }
        if let Some(i) = sb {
            size_b[i] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let (mut gi, mut gs) = (0usize, 0usize);
    for (i, &c) in classes.iter().enumerate() {
        let denom = size_a[i] + size_b[i];
        if denom == 0 {
            per_class.push((c, None));
        } else {
            per_class.push((c, Some(2.0 * inter[i] as f64 / denom as f64)));
            gi += inter[i];
            gs += denom;
        }
    }
    Ok(DiceScores {
        per_class,
        global: (gs > 0).then(|| 2.0 * gi as f64 / gs as f64),
    })
}

/// `n` distinct members of `set`, in random order.
pub fn sample_without_replacement<'a, X>(set: &'a [X], n: usize, stream: &mut SeedStream) -> Result<Vec<&'a X>> {
    if n > set.len() {
        bail!(Contract, "cannot draw {n} distinct items from {}", set.len());
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    // partial Fisher-Yates
    for i in 0..n {
        let j = i + stream.below(set.len() - i);
        idx.swap(i, j);
    }
    Ok(idx[..n].iter().map(|&i| &set[i]).collect())
}
