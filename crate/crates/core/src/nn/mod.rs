//! Parameters, normalizations and initialization used by the networks.

mod init;
mod norm;
mod parameter;
mod spectral;

pub use init::he_normal;
pub use norm::{batch_norm3d, instance_norm3d, BatchNormState, NORM_EPS};
pub use parameter::Parameter;
pub use spectral::{spectral_normalize, SpectralState};
