//! Directories of NIfTI volumes, their model-space form, and the path back
//! from generator output to a scan-space volume.

use std::fs;
use std::path::{Path, PathBuf};

use alphagan_core::volume::{preprocess, restore, Preprocessing, VoxelGrid};

use crate::error::{Error, Result};
use crate::nifti::{read_nifti, Volume};

pub fn is_nifti_path(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

/// NIfTI files directly inside `dir`, sorted by name.
pub fn list_volumes(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_nifti_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every volume of a directory; an empty directory is an error.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Volume)>> {
    let dir = dir.as_ref();
    let paths = list_volumes(dir)?;
    if paths.is_empty() {
        return Err(alphagan_core::Error::Contract(format!("no NIfTI volumes in {}", dir.display())).into());
    }
    paths
        .into_iter()
        .map(|p| {
            let v = read_nifti(&p)?;
            Ok((p, v))
        })
        .collect()
}

/// Model-space `[D, H, W]` extents to voxel-grid `[nx, ny, nz]`.
pub fn grid_extents(volume: [usize; 3]) -> [usize; 3] {
    [volume[2], volume[1], volume[0]]
}

/// Largest extent along any axis over a set of volumes.
pub fn max_extent(volumes: &[Volume]) -> usize {
    volumes
        .iter()
        .flat_map(|v| v.grid.dims())
        .max()
        .unwrap_or(0)
}

/// Pads, flips and normalizes each volume to the model-space target.
pub fn model_grids(volumes: &[Volume], config: &Preprocessing) -> Result<Vec<VoxelGrid>> {
    volumes
        .iter()
        .map(|v| Ok(preprocess(&v.grid, config)?.grid))
        .collect()
}

/// Maps generator output in `[-1, 1]` back to the reference's scan space:
/// undoes the flips, center-crops to the reference extents, rescales to the
/// range the reference was normalized with and attaches its metadata.
pub fn postprocess_generated(grid: &VoxelGrid, reference: &Volume, flip: [bool; 3]) -> Result<Volume> {
    let config = Preprocessing {
        target: grid.dims(),
        flip,
    };
    let range = config.intensity_range(&reference.grid)?;
    let restored = restore(grid, reference.grid.dims(), range, flip)?;
    reference.derive(restored)
}
