//! Layer codes, network specifications, the network builder and the three
//! architecture presets.

mod code;
mod network;
mod presets;
mod spec;

pub use code::{parse_layer_code, LayerCode};
pub use network::{build_network, Geometry, LayerInfo, Mode, Network};
pub use presets::{load_preset, preset_specs, AlphaGanBundle, Preset, LATENT_SIZES};
pub use spec::{LayerKind, LayerSpec, NetworkSpec, Norm, Role};
