//! Voxel grids and the volume-side data pipeline: preprocessing and its
//! inverse, augmentation and synthetic phantoms.

mod augment;
mod phantom;
mod preprocess;

pub use augment::{augment, flip, rotate_z, sample_trilinear, translate, zoom, AugmentationPolicy, Transform};
pub use phantom::{generate_phantom, DEFAULT_STRUCTURES};
pub use preprocess::{preprocess, restore, Preprocessed, Preprocessing};

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::{Real, Tensor};

/// A dense scalar volume with extents `[nx, ny, nz]`, x varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) || dims.iter().product::<usize>() != data.len() {
            bail!(Dimension, "grid {:?} cannot hold {} voxels", dims, data.len());
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Self {
        Self {
            dims,
            data: alloc::vec![value; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    /// `(min, max)` over all voxels.
    pub fn range(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Model layout `[1, 1, nz, ny, nx]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let [nx, ny, nz] = self.dims;
        Tensor::from_parts(alloc::vec![1, 1, nz, ny, nx], self.data.iter().map(|&v| T::lit(v as f64)).collect())
    }

    /// Sample `index` of a `[N, 1, nz, ny, nx]` batch.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, index: usize) -> Result<Self> {
        let s = t.shape();
        if s.len() != 5 || s[1] != 1 || index >= s[0] {
            bail!(Dimension, "cannot take volume {index} of batch {:?}", s);
        }
        let per = s[2] * s[3] * s[4];
        let data = t.data()[index * per..(index + 1) * per]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Ok(Self {
            dims: [s[4], s[3], s[2]],
            data,
        })
    }
}

/// Stacks equally sized grids into a `[N, 1, nz, ny, nx]` batch.
pub fn stack<T: Real>(grids: &[&VoxelGrid]) -> Result<Tensor<T>> {
    let Some(first) = grids.first() else {
        bail!(Contract, "cannot stack an empty set of volumes");
    };
    let dims = first.dims();
    if grids.iter().any(|g| g.dims() != dims) {
        bail!(Dimension, "volumes to stack differ in extent");
    }
    let data = grids
        .iter()
        .flat_map(|g| g.data().iter().map(|&v| T::lit(v as f64)))
        .collect();
    Tensor::new(alloc::vec![grids.len(), 1, dims[2], dims[1], dims[0]], data)
}
