//! Volumetric alpha-GAN engine: a small reverse-mode autodiff core with
//! second-order support, the layers and networks of the alpha-WGAN family,
//! its losses and gradient penalties, Adam/AdamW, the voxel-grid data
//! pipeline and the quantitative evaluation metrics.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, training-loop IO and the command line live in the
//! companion `alphagan` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod optim;
pub mod random;
pub mod tensor;
pub mod train;
pub mod volume;

pub use autodiff::{backward, grad, Var};
pub use error::{Error, Result};
pub use random::SeedStream;
pub use tensor::{Real, Tensor};
