use super::VoxelGrid;
use crate::error::{bail, Result};

/// Geometry and orientation handling shared by preprocessing and its inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preprocessing {
    /// Cube or box the volume is zero-padded to, `[nx, ny, nz]`.
    pub target: [usize; 3],
    /// Axes mirrored after padding.
    pub flip: [bool; 3],
}

impl Preprocessing {
    pub fn cube(extent: usize) -> Self {
        Self {
            target: [extent; 3],
            flip: [false; 3],
        }
    }

    /// Padding before and after each axis for a grid of `dims`.
    pub fn padding(&self, dims: [usize; 3]) -> Result<[(usize, usize); 3]> {
        let mut out = [(0, 0); 3];
        for a in 0..3 {
            if dims[a] > self.target[a] {
                bail!(Contract, "extent {} on axis {a} exceeds target {}", dims[a], self.target[a]);
            }
            let total = self.target[a] - dims[a];
            out[a] = (total / 2, total - total / 2);
        }
        Ok(out)
    }

    /// Intensity range mapped to `[-1, 1]` for a volume: its own range,
    /// widened to include the zero padding when there is any.
    pub fn intensity_range(&self, volume: &VoxelGrid) -> Result<(f64, f64)> {
        let (lo, hi) = volume.range();
        let padded = self.padding(volume.dims())?.iter().any(|&(b, a)| b + a > 0);
        let (lo, hi) = if padded { (lo.min(0.0), hi.max(0.0)) } else { (lo, hi) };
        if !(lo.is_finite() && hi.is_finite()) {
            bail!(Domain, "volume contains non-finite voxels");
        }
        if hi <= lo {
            bail!(Domain, "constant volume cannot be normalized");
        }
        Ok((lo as f64, hi as f64))
    }
}

/// A model-ready volume with what is needed to undo the preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub grid: VoxelGrid,
    pub original_dims: [usize; 3],
    pub range: (f64, f64),
}

fn mirror(grid: &VoxelGrid, flips: [bool; 3]) -> VoxelGrid {
    if !flips.contains(&true) {
        return grid.clone();
    }
    let [nx, ny, nz] = grid.dims();
    VoxelGrid::from_fn(grid.dims(), |x, y, z| {
        let sx = if flips[0] { nx - 1 - x } else { x };
        let sy = if flips[1] { ny - 1 - y } else { y };
        let sz = if flips[2] { nz - 1 - z } else { z };
        grid.get(sx, sy, sz)
    })
}

/// Zero-pads symmetrically to the target, applies the orientation flips and
/// maps the intensities min-max onto `[-1, 1]`.
pub fn preprocess(volume: &VoxelGrid, config: &Preprocessing) -> Result<Preprocessed> {
    let pads = config.padding(volume.dims())?;
    let (lo, hi) = config.intensity_range(volume)?;
    let dims = volume.dims();
    let padded = VoxelGrid::from_fn(config.target, |x, y, z| {
        let p = [x, y, z];
        let mut src = [0usize; 3];
        for a in 0..3 {
            if p[a] < pads[a].0 || p[a] >= pads[a].0 + dims[a] {
                return 0.0;
            }
            src[a] = p[a] - pads[a].0;
        }
        volume.get(src[0], src[1], src[2])
    });
    let scale = 2.0 / (hi - lo);
    let grid = mirror(&padded, config.flip).map(|v| ((v as f64 - lo) * scale - 1.0) as f32);
    Ok(Preprocessed {
        grid,
        original_dims: dims,
        range: (lo, hi),
    })
}

/// Inverse of [`preprocess`]: undoes the flips, center-crops to `dims` and
/// maps `[-1, 1]` back onto `range`.
pub fn restore(grid: &VoxelGrid, dims: [usize; 3], range: (f64, f64), flips: [bool; 3]) -> Result<VoxelGrid> {
    let config = Preprocessing {
        target: grid.dims(),
        flip: flips,
    };
    let pads = config.padding(dims)?;
    let unflipped = mirror(grid, flips);
    let (lo, hi) = range;
    let half = (hi - lo) / 2.0;
    Ok(VoxelGrid::from_fn(dims, |x, y, z| {
        let v = unflipped.get(x + pads[0].0, y + pads[1].0, z + pads[2].0) as f64;
        ((v + 1.0) * half + lo) as f32
    }))
}
