use alloc::vec::Vec;

use num_traits::Float;

use super::VoxelGrid;
use crate::error::{bail, Result};
use crate::random::SeedStream;

pub const DEFAULT_STRUCTURES: usize = 3;

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    intensity: f64,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Synthetic brain-like volume of extents `[nx, ny, nz]`: an ellipsoid with
/// `n_structures` nested ellipsoids of distinct intensities and a mild
/// smooth modulation. Background is exactly zero and intensities lie in
/// `[0, 1]`.
pub fn generate_phantom(seed: u64, dims: [usize; 3], n_structures: usize) -> Result<VoxelGrid> {
    if dims.iter().any(|&d| d < 8) {
        bail!(Contract, "phantom extents must be at least 8, got {:?}", dims);
    }
    let mut s = SeedStream::new(seed);
    let ext = dims.map(|d| d as f64);
    let brain = Ellipsoid {
        center: [0, 1, 2].map(|a| (ext[a] - 1.0) / 2.0 + s.uniform_range(-0.05, 0.05) * ext[a]),
        radii: [0, 1, 2].map(|a| s.uniform_range(0.3, 0.42) * ext[a]),
        intensity: s.uniform_range(0.45, 0.6),
    };
    // Nested structures shrink toward the brain center with rising intensity.
    let mut inner: Vec<Ellipsoid> = Vec::with_capacity(n_structures);
    for i in 0..n_structures {
        let parent = inner.last().unwrap_or(&brain);
        let shrink = s.uniform_range(0.5, 0.75);
        let radii = parent.radii.map(|r| r * shrink);
        let center = [0, 1, 2].map(|a| parent.center[a] + s.uniform_range(-0.15, 0.15) * (parent.radii[a] - radii[a]));
        let step = 0.4 / n_structures as f64;
        let intensity = brain.intensity + step * (i as f64 + 1.0) + s.uniform_range(-0.25, 0.25) * step;
        inner.push(Ellipsoid { center, radii, intensity });
    }
    let freq = [0, 1, 2].map(|_| s.uniform_range(0.5, 1.5));
    let phase = [0, 1, 2].map(|_| s.uniform_range(0.0, core::f64::consts::TAU));
    let amplitude = 0.03;
    Ok(VoxelGrid::from_fn(dims, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        if !brain.contains(p) {
            return 0.0;
        }
        let mut v = inner
            .iter()
            .rev()
            .find(|e| e.contains(p))
            .map_or(brain.intensity, |e| e.intensity);
        for a in 0..3 {
            v += amplitude / 3.0 * Float::sin(core::f64::consts::TAU * freq[a] * p[a] / ext[a] + phase[a]);
        }
        v.clamp(0.0, 1.0) as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_bounded_and_mostly_background() {
        let a = generate_phantom(7, [16; 3], DEFAULT_STRUCTURES).unwrap();
        assert_eq!(a, generate_phantom(7, [16; 3], DEFAULT_STRUCTURES).unwrap());
        assert_ne!(a, generate_phantom(8, [16; 3], DEFAULT_STRUCTURES).unwrap());
        let (lo, hi) = a.range();
        assert!(lo >= 0.0 && hi <= 1.0 && hi > lo);
        let background = a.data().iter().filter(|&&v| v == 0.0).count() as f64 / a.len() as f64;
        assert!(background > 0.3, "background fraction {background}");
    }

    #[test]
    fn structures_have_distinct_levels() {
        let a = generate_phantom(1, [32; 3], 3).unwrap();
        let c = a.get(16, 16, 16);
        let edge = a.get(16, 16, 16 + 10);
        assert!(c > edge + 0.05, "center {c} edge {edge}");
        assert!(generate_phantom(1, [4, 16, 16], 3).is_err());
    }
}
