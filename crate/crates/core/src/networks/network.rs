use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::code::LayerCode;
use super::spec::{LayerKind, LayerSpec, NetworkSpec, Norm, Role};
use crate::autodiff::{conv3d_output_extent, conv_transpose3d_output_extent, Activation, Var};
use crate::error::{bail, Error, Result};
use crate::nn::{batch_norm3d, he_normal, instance_norm3d, spectral_normalize, BatchNormState, Parameter, SpectralState, NORM_EPS};
use crate::random::SeedStream;
use crate::tensor::{numel, Real, Tensor};

/// Shapes a network is built against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    /// Spatial extents `[D, H, W]` of the single-channel volumes.
    pub volume: [usize; 3],
    pub latent_dim: usize,
    /// Channel multiplier applied to every layer but the last.
    pub width: f64,
}

/// How a forward pass treats parameters and buffers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    /// Batch statistics for batch norm; power iteration for spectral norm.
    pub training: bool,
    /// Parameters enter as constants and buffers are left untouched.
    pub frozen: bool,
}

impl Mode {
    /// Forward of the network currently being optimized.
    pub const TRAIN: Mode = Mode { training: true, frozen: false };
    /// Training-time forward of a network outside the current update.
    pub const FROZEN: Mode = Mode { training: true, frozen: true };
    /// Inference with running statistics.
    pub const EVAL: Mode = Mode { training: false, frozen: true };
}

/// Introspection record of one built layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerInfo {
    pub kind: LayerKind,
    /// Code after width scaling.
    pub code: LayerCode,
    pub spectral_norm: bool,
    /// Normalization as declared in the specification.
    pub declared_norm: Norm,
    /// Normalization actually applied; instance norm is skipped on
    /// single-voxel outputs.
    pub norm: Norm,
    pub activation: Activation,
    /// Per-sample output shape.
    pub output_shape: Vec<usize>,
}

#[derive(Clone)]
struct Layer<T: Real> {
    spec: LayerSpec,
    norm: Norm,
    in_features: usize,
    out_shape: Vec<usize>,
    weight: Parameter<T>,
    bias: Parameter<T>,
    affine: Option<(Parameter<T>, Parameter<T>)>,
    spectral: Option<SpectralState<T>>,
    batch: Option<BatchNormState<T>>,
}

/// One of the four alpha-GAN networks: a parameterized forward map with
/// spectral-norm vectors and batch-norm statistics as mutable buffers.
#[derive(Clone)]
pub struct Network<T: Real> {
    role: Role,
    spec: NetworkSpec,
    geometry: Geometry,
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

fn scaled_channels(n: usize, width: f64, last: bool) -> usize {
    if last {
        n
    } else {
        (num_traits::Float::round(n as f64 * width) as usize).max(1)
    }
}

fn spatial_step(layer: &LayerSpec, extent: usize) -> Option<usize> {
    let c = layer.code;
    match layer.kind {
        LayerKind::Conv => conv3d_output_extent(extent, c.k, c.s, c.p),
        LayerKind::TransposedConv => conv_transpose3d_output_extent(extent, c.k, c.s, c.p),
        _ => None,
    }
}

/// Smallest projection extent that the following run of convolutions maps
/// onto `target`.
fn solve_projection(following: &[LayerSpec], target: usize) -> Option<usize> {
    (1..=target).find(|&e| {
        following
            .iter()
            .try_fold(e, |d, l| spatial_step(l, d))
            .map_or(false, |d| d == target)
    })
}

fn shape_error(layer: usize, message: String) -> Error {
    Error::Shape { layer, message }
}

/// Builds a network, validating shape propagation layer by layer and drawing
/// He-normal weights from a stream derived from `seed` and the role.
pub fn build_network<T: Real>(spec: &NetworkSpec, geometry: Geometry, seed: u64) -> Result<Network<T>> {
    if !(geometry.width > 0.0) || geometry.latent_dim == 0 || geometry.volume.contains(&0) {
        bail!(Contract, "invalid geometry {:?}", geometry);
    }
    let role = spec.role;
    let role_index = Role::ALL.iter().position(|&r| r == role).unwrap_or(0) as u64;
    let mut stream = SeedStream::with_stream(seed, role_index);
    let [vd, vh, vw] = geometry.volume;
    let input_shape = if role.takes_latent() {
        vec![geometry.latent_dim]
    } else {
        vec![1, vd, vh, vw]
    };
    let count = spec.layers.len();
    let mut shape = input_shape.clone();
    let mut layers = Vec::with_capacity(count);
    for (i, declared) in spec.layers.iter().enumerate() {
        let mut ls = *declared;
        ls.code.n = scaled_channels(declared.code.n, geometry.width, i + 1 == count);
        let n = ls.code.n;
        let (k, s) = (ls.code.k, ls.code.s);
        let in_features = numel(&shape);
        let (weight_shape, fan_in, out_shape) = match ls.kind {
            LayerKind::Conv | LayerKind::TransposedConv => {
                if shape.len() != 4 {
                    return Err(shape_error(i, format!("convolution needs a spatial input, got {:?}", shape)));
                }
                let mut out = vec![n];
                for d in 0..3 {
                    match spatial_step(&ls, shape[1 + d]) {
                        Some(e) => out.push(e),
                        None => {
                            return Err(shape_error(
                                i,
                                format!("code {} does not fit input extent {}", ls.code, shape[1 + d]),
                            ))
                        }
                    }
                }
                let c = shape[0];
                if ls.kind == LayerKind::Conv {
                    (vec![n, c, k, k, k], c * k * k * k, out)
                } else {
                    (vec![c, n, k, k, k], (c * k * k * k / (s * s * s)).max(1), out)
                }
            }
            LayerKind::Dense => (vec![n, in_features], in_features, vec![n]),
            LayerKind::Project => {
                let run_end = spec.layers[i + 1..]
                    .iter()
                    .position(|l| !matches!(l.kind, LayerKind::Conv | LayerKind::TransposedConv))
                    .map_or(count, |j| i + 1 + j);
                let following = &spec.layers[i + 1..run_end];
                let mut out = vec![n];
                for &target in &geometry.volume {
                    match solve_projection(following, target) {
                        Some(e) => out.push(e),
                        None => {
                            return Err(shape_error(
                                i,
                                format!("no projection extent reaches volume extent {target}"),
                            ))
                        }
                    }
                }
                (vec![numel(&out), in_features], in_features, out)
            }
        };
        let spatial = out_shape.len() == 4;
        let norm = match ls.norm {
            Norm::Instance if !spatial => {
                return Err(shape_error(i, "instance norm needs a spatial output".into()));
            }
            Norm::Instance if numel(&out_shape[1..]) < 2 => Norm::None,
            other => other,
        };
        let prefix = format!("{}.{}", role.name(), i);
        let weight = Parameter::new(format!("{prefix}.weight"), he_normal(&weight_shape, fan_in, &mut stream));
        let bias_len = if ls.kind == LayerKind::Project { weight_shape[0] } else { n };
        let bias = Parameter::new(format!("{prefix}.bias"), Tensor::zeros(&[bias_len]));
        let affine = (norm != Norm::None).then(|| {
            (
                Parameter::new(format!("{prefix}.gamma"), Tensor::ones(&[n])),
                Parameter::new(format!("{prefix}.beta"), Tensor::zeros(&[n])),
            )
        });
        let spectral = ls
            .spectral_norm
            .then(|| SpectralState::new(weight_shape[0], 1, &mut stream));
        let batch = (norm == Norm::Batch).then(|| BatchNormState::new(n));
        shape = out_shape.clone();
        layers.push(Layer {
            spec: ls,
            norm,
            in_features,
            out_shape,
            weight,
            bias,
            affine,
            spectral,
            batch,
        });
    }
    let expected = match role {
        Role::Generator => vec![1, vd, vh, vw],
        Role::Discriminator | Role::CodeDiscriminator => vec![1],
        Role::Encoder => vec![geometry.latent_dim],
    };
    if shape != expected {
        return Err(shape_error(
            count - 1,
            format!("{} output {:?}, expected {:?}", role.name(), shape, expected),
        ));
    }
    Ok(Network {
        role,
        spec: spec.clone(),
        geometry,
        input_shape,
        layers,
    })
}

impl<T: Real> Layer<T> {
    fn weights(&mut self, mode: Mode) -> Result<(Var<T>, Var<T>)> {
        let (w, b) = if mode.frozen {
            (self.weight.frozen(), self.bias.frozen())
        } else {
            (self.weight.var().clone(), self.bias.var().clone())
        };
        let w = match &mut self.spectral {
            Some(state) if mode.training && !mode.frozen => spectral_normalize(&w, state)?,
            Some(state) => w.scale(1.0 / state.sigma(w.value())?),
            None => w,
        };
        Ok((w, b))
    }

    fn forward(&mut self, x: &Var<T>, mode: Mode) -> Result<Var<T>> {
        let n = x.shape()[0];
        let (w, b) = self.weights(mode)?;
        let c = self.spec.code;
        let mut h = match self.spec.kind {
            LayerKind::Conv => x.conv3d(&w, Some(&b), c.s, c.p)?,
            LayerKind::TransposedConv => x.conv_transpose3d(&w, Some(&b), c.s, c.p)?,
            LayerKind::Dense => x.reshape(&[n, self.in_features])?.dense(&w, Some(&b))?,
            LayerKind::Project => {
                let mut shape = vec![n];
                shape.extend_from_slice(&self.out_shape);
                x.reshape(&[n, self.in_features])?.dense(&w, Some(&b))?.reshape(&shape)?
            }
        };
        let affine = self.affine.as_ref().map(|(g, be)| {
            if mode.frozen {
                (g.frozen(), be.frozen())
            } else {
                (g.var().clone(), be.var().clone())
            }
        });
        let affine_refs = affine.as_ref().map(|(g, be)| (g, be));
        h = match self.norm {
            Norm::None => h,
            Norm::Instance => instance_norm3d(&h, affine_refs, NORM_EPS)?,
            Norm::Batch => {
                let state = self.batch.as_mut().expect("batch state exists for batch-norm layers");
                if mode.frozen && mode.training {
                    let mut scratch = state.clone();
                    batch_norm3d(&h, affine_refs, &mut scratch, true)?
                } else {
                    batch_norm3d(&h, affine_refs, state, mode.training)?
                }
            }
        };
        self.spec.activation.apply(&h)
    }

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = vec![&self.weight, &self.bias];
        if let Some((g, b)) = &self.affine {
            out.push(g);
            out.push(b);
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = vec![&mut self.weight, &mut self.bias];
        if let Some((g, b)) = &mut self.affine {
            out.push(g);
            out.push(b);
        }
        out
    }
}

impl<T: Real> Network<T> {
    pub fn role(&self) -> Role {
        self.role
    }

    /// The specification as declared, before width scaling.
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("networks have layers").out_shape
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        self.layers
            .iter()
            .map(|l| LayerInfo {
                kind: l.spec.kind,
                code: l.spec.code,
                spectral_norm: l.spectral.is_some(),
                declared_norm: l.spec.norm,
                norm: l.norm,
                activation: l.spec.activation,
                output_shape: l.out_shape.clone(),
            })
            .collect()
    }

    pub fn count_spectral(&self) -> usize {
        self.layers.iter().filter(|l| l.spectral.is_some()).count()
    }

    /// Normalization layers actually applied.
    pub fn count_norm(&self) -> usize {
        self.layers.iter().filter(|l| l.norm != Norm::None).count()
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.parameters().iter().for_each(|p| p.zero_grad());
    }

    /// Maps a batch `[N, input_shape..]` to `[N, output_shape..]`.
    pub fn forward(&mut self, x: &Var<T>, mode: Mode) -> Result<Var<T>> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            bail!(
                Contract,
                "{} expects per-sample input {:?}, got batch {:?}",
                self.role.name(),
                self.input_shape,
                x.shape()
            );
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Spectral-normalized weights after `iterations` further power
    /// iterations on copies of the stored vectors.
    pub fn spectral_weights(&self, iterations: usize) -> Result<Vec<(String, Tensor<T>)>> {
        self.layers
            .iter()
            .filter_map(|l| l.spectral.as_ref().map(|s| (l, s)))
            .map(|(l, s)| {
                let mut state = s.clone();
                let sigma = state.update(l.weight.value(), iterations)?;
                Ok((
                    String::from(l.weight.name()),
                    l.weight.value().map(|v| T::lit(v.as_f64() / sigma)),
                ))
            })
            .collect()
    }

    /// Named non-trainable state: spectral-norm vectors and batch-norm
    /// statistics.
    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let prefix = format!("{}.{}", self.role.name(), i);
            if let Some(s) = &l.spectral {
                out.push((format!("{prefix}.sn_u"), s.u.clone()));
            }
            if let Some(b) = &l.batch {
                out.push((format!("{prefix}.running_mean"), b.running_mean.clone()));
                out.push((format!("{prefix}.running_var"), b.running_var.clone()));
                out.push((format!("{prefix}.bn_updates"), vec![T::lit(b.updates as f64)]));
            }
        }
        out
    }

    /// Restores one buffer by name; lengths must match.
    pub fn set_buffer(&mut self, name: &str, values: &[T]) -> Result<()> {
        let prefix = format!("{}.", self.role.name());
        let rest = match name.strip_prefix(&prefix) {
            Some(r) => r,
            None => bail!(Contract, "buffer {name} does not belong to {}", self.role.name()),
        };
        let (index, field) = match rest.split_once('.') {
            Some((i, f)) => (i.parse::<usize>().ok(), f),
            None => (None, rest),
        };
        let layer = match index.and_then(|i| self.layers.get_mut(i)) {
            Some(l) => l,
            None => bail!(Contract, "unknown buffer {name}"),
        };
        let target: &mut Vec<T> = match (field, &mut layer.spectral, &mut layer.batch) {
            ("sn_u", Some(s), _) => &mut s.u,
            ("running_mean", _, Some(b)) => &mut b.running_mean,
            ("running_var", _, Some(b)) => &mut b.running_var,
            ("bn_updates", _, Some(b)) => {
                if values.len() != 1 {
                    bail!(Contract, "buffer {name} holds one value");
                }
                b.updates = values[0].as_f64() as u64;
                return Ok(());
            }
            _ => bail!(Contract, "unknown buffer {name}"),
        };
        if target.len() != values.len() {
            bail!(Contract, "buffer {name} has length {}, got {}", target.len(), values.len());
        }
        target.copy_from_slice(values);
        Ok(())
    }
}
