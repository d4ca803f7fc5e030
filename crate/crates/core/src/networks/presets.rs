use alloc::vec::Vec;

use super::code::LayerCode;
use super::network::{build_network, Geometry, Network};
use super::spec::{LayerKind, LayerSpec, NetworkSpec, Norm, Role, DEFAULT_LEAKY_SLOPE};
use crate::autodiff::Activation;
use crate::error::{bail, Error, Result};
use crate::tensor::Real;

/// Latent sizes the presets are defined for.
pub const LATENT_SIZES: [usize; 2] = [500, 1000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Batch norm, ReLU, no spectral norm.
    AdniBaseline,
    /// Spectral norm on every weight layer, instance norm, LeakyReLU.
    SigmaRat1,
    /// Spectral norm and no normalization in D and C; instance norm kept in
    /// G and E.
    SigmaRat2,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::AdniBaseline, Preset::SigmaRat1, Preset::SigmaRat2];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AdniBaseline => "adni_baseline",
            Preset::SigmaRat1 => "sigmarat1",
            Preset::SigmaRat2 => "sigmarat2",
        }
    }

    pub fn default_latent(self) -> usize {
        match self {
            Preset::AdniBaseline => 1000,
            Preset::SigmaRat1 | Preset::SigmaRat2 => 500,
        }
    }

    fn activation(self) -> Activation {
        match self {
            Preset::AdniBaseline => Activation::Relu,
            _ => Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
        }
    }

    fn spectral(self, role: Role) -> bool {
        match self {
            Preset::AdniBaseline => false,
            Preset::SigmaRat1 => true,
            Preset::SigmaRat2 => matches!(role, Role::Discriminator | Role::CodeDiscriminator),
        }
    }

    /// Normalization of hidden layers; instance norm is undefined on the
    /// code discriminator's vectors.
    fn norm(self, role: Role) -> Norm {
        match (self, role) {
            (Preset::AdniBaseline, _) => Norm::Batch,
            (Preset::SigmaRat1, Role::CodeDiscriminator) => Norm::None,
            (Preset::SigmaRat1, _) => Norm::Instance,
            (Preset::SigmaRat2, Role::Generator | Role::Encoder) => Norm::Instance,
            (Preset::SigmaRat2, _) => Norm::None,
        }
    }
}

impl core::fmt::Display for Preset {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match Preset::ALL.into_iter().find(|p| p.name() == s) {
            Some(p) => Ok(p),
            None => bail!(Contract, "unknown preset `{s}`"),
        }
    }
}

const STRIDED: (usize, usize, usize) = (4, 2, 1);

fn strided(n: usize) -> LayerCode {
    LayerCode {
        n,
        k: STRIDED.0,
        s: STRIDED.1,
        p: STRIDED.2,
    }
}

/// Full-scale specifications `[G, D, E, C]` of a preset; the width
/// multiplier is applied at build time.
pub fn preset_specs(preset: Preset, latent_dim: usize) -> [NetworkSpec; 4] {
    let act = preset.activation();
    let layer = |role: Role, kind, code, norm| {
        LayerSpec::new(kind, code)
            .with_sn(preset.spectral(role))
            .with_norm(norm)
            .with_activation(act)
    };

    let g = Role::Generator;
    let mut generator = Vec::new();
    generator.push(layer(g, LayerKind::Project, LayerCode::dense(512), preset.norm(g)));
    for n in [256, 128, 64] {
        generator.push(layer(g, LayerKind::TransposedConv, strided(n), preset.norm(g)));
    }
    generator.push(layer(g, LayerKind::TransposedConv, strided(1), Norm::None).with_activation(Activation::Tanh));

    let critic = |role: Role, out: usize| {
        let mut layers = Vec::new();
        layers.push(layer(role, LayerKind::Conv, strided(64), Norm::None));
        for n in [128, 256, 512] {
            layers.push(layer(role, LayerKind::Conv, strided(n), preset.norm(role)));
        }
        layers.push(layer(role, LayerKind::Dense, LayerCode::dense(out), Norm::None).with_activation(Activation::Linear));
        NetworkSpec { role, layers }
    };

    let c = Role::CodeDiscriminator;
    let mut code = Vec::new();
    for _ in 0..3 {
        code.push(layer(c, LayerKind::Dense, LayerCode::dense(4096), preset.norm(c)));
    }
    code.push(layer(c, LayerKind::Dense, LayerCode::dense(1), Norm::None).with_activation(Activation::Linear));

    [
        NetworkSpec {
            role: g,
            layers: generator,
        },
        critic(Role::Discriminator, 1),
        critic(Role::Encoder, latent_dim),
        NetworkSpec { role: c, layers: code },
    ]
}

/// The four networks of an alpha-GAN together with their shared geometry.
#[derive(Clone)]
pub struct AlphaGanBundle<T: Real> {
    pub preset: Preset,
    pub geometry: Geometry,
    pub generator: Network<T>,
    pub discriminator: Network<T>,
    pub encoder: Network<T>,
    pub code_discriminator: Network<T>,
}

impl<T: Real> AlphaGanBundle<T> {
    /// Builds from explicit specifications ordered `[G, D, E, C]`.
    pub fn from_specs(preset: Preset, specs: &[NetworkSpec; 4], geometry: Geometry, seed: u64) -> Result<Self> {
        for (spec, role) in specs.iter().zip(Role::ALL) {
            if spec.role != role {
                bail!(Contract, "expected a {} specification, got {}", role.name(), spec.role.name());
            }
        }
        Ok(Self {
            preset,
            geometry,
            generator: build_network(&specs[0], geometry, seed)?,
            discriminator: build_network(&specs[1], geometry, seed)?,
            encoder: build_network(&specs[2], geometry, seed)?,
            code_discriminator: build_network(&specs[3], geometry, seed)?,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.geometry.latent_dim
    }

    /// Networks in the order G, D, E, C.
    pub fn networks(&self) -> [&Network<T>; 4] {
        [&self.generator, &self.discriminator, &self.encoder, &self.code_discriminator]
    }

    pub fn networks_mut(&mut self) -> [&mut Network<T>; 4] {
        [
            &mut self.generator,
            &mut self.discriminator,
            &mut self.encoder,
            &mut self.code_discriminator,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.networks().iter().map(|n| n.parameter_count()).sum()
    }

    pub fn zero_grad(&self) {
        self.networks().iter().for_each(|n| n.zero_grad());
    }
}

/// Builds a named preset. The latent size must be one the presets are
/// defined for.
pub fn load_preset<T: Real>(name: &str, geometry: Geometry, seed: u64) -> Result<AlphaGanBundle<T>> {
    let preset: Preset = name.parse()?;
    if !LATENT_SIZES.contains(&geometry.latent_dim) {
        bail!(Contract, "latent size {} not in {:?}", geometry.latent_dim, LATENT_SIZES);
    }
    AlphaGanBundle::from_specs(preset, &preset_specs(preset, geometry.latent_dim), geometry, seed)
}
