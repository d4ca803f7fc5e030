use alloc::vec::Vec;

use num_traits::Float;

use super::VoxelGrid;
use crate::error::{bail, Result};
use crate::random::SeedStream;

/// One randomized transform with its parameter range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    /// Isotropic scaling about the center by a factor in `[min, max]`.
    Zoom { min: f64, max: f64 },
    /// Rotation about the z axis by an angle in `±max_degrees`.
    Rotation { max_degrees: f64 },
    /// Additive noise with σ in `[0, max_sigma]` times the intensity range.
    GaussianNoise { max_sigma: f64 },
    /// Mirror along one axis.
    Flip { axis: usize },
    /// Integer shift in `±max_shift` voxels per axis.
    Translation { max_shift: usize },
    /// Intensity scaling about the volume minimum by a factor in `[min, max]`.
    IntensityScale { min: f64, max: f64 },
}

/// Transforms applied in order, each with its own probability.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationPolicy {
    pub transforms: Vec<(Transform, f64)>,
    /// Value of voxels exposed by zoom, rotation and translation.
    pub fill: f32,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::none()
    }
}

impl AugmentationPolicy {
    pub fn none() -> Self {
        Self {
            transforms: Vec::new(),
            fill: 0.0,
        }
    }

    /// All six transforms at probability 0.5 with the default ranges.
    pub fn standard() -> Self {
        Self {
            transforms: alloc::vec![
                (Transform::Zoom { min: 0.9, max: 1.1 }, 0.5),
                (Transform::Rotation { max_degrees: 10.0 }, 0.5),
                (Transform::GaussianNoise { max_sigma: 0.05 }, 0.5),
                (Transform::Flip { axis: 0 }, 0.5),
                (Transform::Translation { max_shift: 4 }, 0.5),
                (Transform::IntensityScale { min: 0.9, max: 1.1 }, 0.5),
            ],
            fill: 0.0,
        }
    }

    /// Left-right flip only, at probability 0.5.
    pub fn flip_only() -> Self {
        Self {
            transforms: alloc::vec![(Transform::Flip { axis: 0 }, 0.5)],
            fill: 0.0,
        }
    }

    pub fn with_fill(mut self, fill: f32) -> Self {
        self.fill = fill;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (t, p) in &self.transforms {
            if !(0.0..=1.0).contains(p) {
                bail!(Contract, "probability {p} of {:?} outside [0, 1]", t);
            }
            let ok = match *t {
                Transform::Zoom { min, max } | Transform::IntensityScale { min, max } => {
                    0.5 <= min && min <= max && max <= 2.0
                }
                Transform::Rotation { max_degrees } => (0.0..=45.0).contains(&max_degrees),
                Transform::GaussianNoise { max_sigma } => (0.0..=0.2).contains(&max_sigma),
                Transform::Flip { axis } => axis < 3,
                Transform::Translation { max_shift } => max_shift <= 16,
            };
            if !ok {
                bail!(Contract, "{:?} outside the supported range", t);
            }
        }
        if !self.fill.is_finite() {
            bail!(Contract, "fill value must be finite");
        }
        Ok(())
    }
}

/// Trilinear interpolation at a fractional voxel position; neighbors outside
/// the grid read as `fill`.
pub fn sample_trilinear(grid: &VoxelGrid, pos: [f64; 3], fill: f32) -> f32 {
    let dims = grid.dims();
    let mut base = [0i64; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let f = Float::floor(pos[a]);
        base[a] = f as i64;
        frac[a] = pos[a] - f;
    }
    let at = |x: i64, y: i64, z: i64| -> f64 {
        let inside = [x, y, z].iter().zip(&dims).all(|(&c, &n)| c >= 0 && (c as usize) < n);
        if inside {
            grid.get(x as usize, y as usize, z as usize) as f64
        } else {
            fill as f64
        }
    };
    let mut acc = 0.0;
    for corner in 0..8 {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        for a in 0..3 {
            w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            acc += w * at(base[0] + off[0] as i64, base[1] + off[1] as i64, base[2] + off[2] as i64);
        }
    }
    acc as f32
}

fn center(dims: [usize; 3]) -> [f64; 3] {
    [
        (dims[0] as f64 - 1.0) / 2.0,
        (dims[1] as f64 - 1.0) / 2.0,
        (dims[2] as f64 - 1.0) / 2.0,
    ]
}

/// Scales about the center; factors above one magnify.
pub fn zoom(grid: &VoxelGrid, factor: f64, fill: f32) -> VoxelGrid {
    let c = center(grid.dims());
    VoxelGrid::from_fn(grid.dims(), |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        let src = [0, 1, 2].map(|a| (p[a] - c[a]) / factor + c[a]);
        sample_trilinear(grid, src, fill)
    })
}

/// Rotates the x-y plane about the center.
pub fn rotate_z(grid: &VoxelGrid, degrees: f64, fill: f32) -> VoxelGrid {
    let c = center(grid.dims());
    let (s, co) = Float::sin_cos(degrees * core::f64::consts::PI / 180.0);
    VoxelGrid::from_fn(grid.dims(), |x, y, z| {
        let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
        // inverse rotation maps output positions to input positions
        let src = [co * dx + s * dy + c[0], -s * dx + co * dy + c[1], z as f64];
        sample_trilinear(grid, src, fill)
    })
}

/// Mirrors along `axis`.
pub fn flip(grid: &VoxelGrid, axis: usize) -> VoxelGrid {
    let dims = grid.dims();
    VoxelGrid::from_fn(dims, |x, y, z| {
        let mut p = [x, y, z];
        p[axis] = dims[axis] - 1 - p[axis];
        grid.get(p[0], p[1], p[2])
    })
}

/// Moves content by `shift` voxels, so the voxel at `p` lands at `p + shift`.
pub fn translate(grid: &VoxelGrid, shift: [i64; 3], fill: f32) -> VoxelGrid {
    let dims = grid.dims();
    VoxelGrid::from_fn(dims, |x, y, z| {
        let p = [x as i64, y as i64, z as i64];
        let src = [0, 1, 2].map(|a| p[a] - shift[a]);
        if src.iter().zip(&dims).all(|(&c, &n)| c >= 0 && (c as usize) < n) {
            grid.get(src[0] as usize, src[1] as usize, src[2] as usize)
        } else {
            fill
        }
    })
}

/// Applies each transform of the policy with its probability. The stream
/// advances by one draw per transform plus the draws of applied transforms.
pub fn augment(grid: &VoxelGrid, policy: &AugmentationPolicy, stream: &mut SeedStream) -> Result<VoxelGrid> {
    policy.validate()?;
    let mut out = grid.clone();
    for &(t, p) in &policy.transforms {
        if !stream.bernoulli(p) {
            continue;
        }
        out = match t {
            Transform::Zoom { min, max } => zoom(&out, stream.uniform_range(min, max), policy.fill),
            Transform::Rotation { max_degrees } => {
                rotate_z(&out, stream.uniform_range(-max_degrees, max_degrees), policy.fill)
            }
            Transform::GaussianNoise { max_sigma } => {
                let (lo, hi) = out.range();
                let sigma = stream.uniform() * max_sigma * (hi - lo) as f64;
                let mut noisy = out;
                for v in noisy.data_mut() {
                    *v += (sigma * stream.normal()) as f32;
                }
                noisy
            }
            Transform::Flip { axis } => flip(&out, axis),
            Transform::Translation { max_shift } => {
                let m = max_shift as i64;
                let shift = [0; 3].map(|_: i64| stream.below(2 * max_shift + 1) as i64 - m);
                translate(&out, shift, policy.fill)
            }
            Transform::IntensityScale { min, max } => {
                let f = stream.uniform_range(min, max) as f32;
                let lo = out.range().0;
                out.map(|v| lo + (v - lo) * f)
            }
        };
    }
    Ok(out)
}
