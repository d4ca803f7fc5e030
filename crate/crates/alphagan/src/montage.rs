//! Binary PGM montages of every axial slice of a volume, for quick visual
//! review.

use std::fs;
use std::path::Path;

use alphagan_core::volume::VoxelGrid;

use crate::error::{Error, Result};

/// Tiles the z slices row-major into a near-square grid; intensities are
/// mapped linearly from `range` onto 0..=255.
pub fn montage(grid: &VoxelGrid, range: (f32, f32)) -> (usize, usize, Vec<u8>) {
    let [nx, ny, nz] = grid.dims();
    let cols = (nz as f64).sqrt().ceil() as usize;
    let rows = nz.div_ceil(cols);
    let (w, h) = (cols * nx, rows * ny);
    let (lo, hi) = range;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = vec![0u8; w * h];
    for z in 0..nz {
        let (ox, oy) = ((z % cols) * nx, (z / cols) * ny);
        for y in 0..ny {
            for x in 0..nx {
                let v = ((grid.get(x, y, z) - lo) / span).clamp(0.0, 1.0);
                // image rows run top to bottom, y runs upward
                pixels[(oy + ny - 1 - y) * w + ox + x] = (v * 255.0).round() as u8;
            }
        }
    }
    (w, h, pixels)
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_montage(grid: &VoxelGrid, range: (f32, f32), path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h, px) = montage(grid, range);
    fs::write(path, encode_pgm(w, h, &px)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_slices() {
        let g = VoxelGrid::from_fn([2, 3, 5], |_, _, z| z as f32);
        let (w, h, px) = montage(&g, (0.0, 4.0));
        assert_eq!((w, h), (6, 6));
        assert_eq!(px[0], 0);
        assert_eq!(px[2], 64);
        assert_eq!(px[3 * 6 + 2], 255);
        assert_eq!(px[5 * 6 + 5], 0);
        let pgm = encode_pgm(w, h, &px);
        assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
        assert_eq!(pgm.len(), 11 + 36);
    }
}
