//! The alpha-GAN iteration: D, then C, then G and E jointly, each on fresh
//! prior samples.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{backward, Var};
use crate::error::{bail, Error, Result};
use crate::losses::{generator_loss, l_c, l_d, GeneratorLoss, LossWeights, WithMode};
use crate::networks::{load_preset, AlphaGanBundle, Geometry, Mode, Preset};
use crate::optim::{AdamState, Optimizer, OptimizerConfig, OptimizerKind};
use crate::random::SeedStream;
use crate::tensor::{Real, Tensor};
use crate::volume::{augment, stack, AugmentationPolicy, VoxelGrid};

/// Updates per phase within one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateRatio {
    pub d: usize,
    pub c: usize,
    pub g: usize,
}

impl Default for UpdateRatio {
    fn default() -> Self {
        Self { d: 1, c: 1, g: 1 }
    }
}

/// Optimizer groups: G and E share one, D and C have their own.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupOptimizers {
    pub generator_encoder: OptimizerConfig,
    pub discriminator: OptimizerConfig,
    pub code_discriminator: OptimizerConfig,
}

impl GroupOptimizers {
    pub fn uniform(config: OptimizerConfig) -> Self {
        Self {
            generator_encoder: config,
            discriminator: config,
            code_discriminator: config,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.generator_encoder.learning_rate = lr;
        self.discriminator.learning_rate = lr;
        self.code_discriminator.learning_rate = lr;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub preset: Preset,
    pub loss: GeneratorLoss,
    pub weights: LossWeights,
    pub optimizers: GroupOptimizers,
    pub latent_dim: usize,
    pub iterations: u64,
    pub batch_size: usize,
    pub ratio: UpdateRatio,
    pub seed: u64,
    pub checkpoint_interval: u64,
    /// Model-space volume extents `[D, H, W]`.
    pub volume: [usize; 3],
    pub width: f64,
    pub augmentation: AugmentationPolicy,
}

impl TrainingConfig {
    /// Full-scale settings of a preset.
    pub fn for_preset(preset: Preset) -> Self {
        let optimizer = match preset {
            Preset::SigmaRat2 => OptimizerConfig::adamw(),
            _ => OptimizerConfig::adam(),
        };
        let augmentation = match preset {
            Preset::AdniBaseline => AugmentationPolicy::flip_only(),
            _ => AugmentationPolicy::standard(),
        }
        // exposed voxels take the normalized background value
        .with_fill(-1.0);
        Self {
            preset,
            loss: GeneratorLoss::for_preset(preset),
            weights: LossWeights::for_preset(preset),
            optimizers: GroupOptimizers::uniform(optimizer),
            latent_dim: preset.default_latent(),
            iterations: 200_000,
            batch_size: 4,
            ratio: UpdateRatio::default(),
            seed: 0,
            checkpoint_interval: 1000,
            volume: [64, 64, 64],
            width: 1.0,
            augmentation,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            volume: self.volume,
            latent_dim: self.latent_dim,
            width: self.width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            bail!(Contract, "batch size must be at least 2, got {}", self.batch_size);
        }
        if self.iterations == 0 {
            bail!(Contract, "iteration count must be positive");
        }
        if self.ratio.d + self.ratio.c + self.ratio.g == 0 {
            bail!(Contract, "update ratio performs no updates");
        }
        let w = &self.weights;
        if [w.lambda1, w.lambda2, w.lambda3].iter().any(|l| !(*l >= 0.0)) {
            bail!(Contract, "loss weights must be non-negative");
        }
        self.augmentation.validate()
    }
}

/// Loss values of one iteration; each is from the last update of its phase,
/// NaN for phases with zero updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub l_d: f64,
    pub l_c: f64,
    pub l_g: f64,
    pub gp_d: f64,
    pub gp_c: f64,
}

/// Exported trainer state: named real buffers and named integer words.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState<T> {
    pub iteration: u64,
    pub tensors: Vec<(String, Vec<T>)>,
    pub words: Vec<(String, Vec<u64>)>,
}

/// Owns a bundle, its three optimizers and the random streams of training.
pub struct Trainer<T: Real> {
    pub config: TrainingConfig,
    pub bundle: AlphaGanBundle<T>,
    optimizers: [Optimizer<T>; 3],
    iteration: u64,
    /// Latent and penalty draws.
    stream: SeedStream,
    /// Minibatch order and augmentation draws.
    data_stream: SeedStream,
    order: Vec<usize>,
    cursor: usize,
}

const GROUPS: [&str; 3] = ["ge", "d", "c"];

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} = {v}")))
    }
}

impl<T: Real> Trainer<T> {
    /// Builds the preset bundle from the configuration.
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let bundle = load_preset(config.preset.name(), config.geometry(), config.seed)?;
        Self::with_bundle(config, bundle)
    }

    /// Trains an externally built bundle; its geometry must match.
    pub fn with_bundle(config: TrainingConfig, bundle: AlphaGanBundle<T>) -> Result<Self> {
        config.validate()?;
        if bundle.geometry.volume != config.volume || bundle.geometry.latent_dim != config.latent_dim {
            bail!(Contract, "bundle geometry {:?} does not match the configuration", bundle.geometry);
        }
        let ge: Vec<_> = bundle
            .generator
            .parameters()
            .into_iter()
            .chain(bundle.encoder.parameters())
            .collect();
        let optimizers = [
            Optimizer::new(config.optimizers.generator_encoder, ge),
            Optimizer::new(config.optimizers.discriminator, bundle.discriminator.parameters()),
            Optimizer::new(config.optimizers.code_discriminator, bundle.code_discriminator.parameters()),
        ];
        Ok(Self {
            stream: SeedStream::with_stream(config.seed, 10),
            data_stream: SeedStream::with_stream(config.seed, 11),
            config,
            bundle,
            optimizers,
            iteration: 0,
            order: Vec::new(),
            cursor: 0,
        })
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn optimizers(&self) -> &[Optimizer<T>; 3] {
        &self.optimizers
    }

    /// Whether a dataset of `n` volumes forces sampling with replacement.
    pub fn needs_replacement(&self, n: usize) -> bool {
        n < self.config.batch_size
    }

    /// Next augmented minibatch: epochs are reshuffled permutations, or
    /// independent draws with replacement when the dataset is smaller than a
    /// batch.
    pub fn next_batch(&mut self, data: &[VoxelGrid]) -> Result<Tensor<T>> {
        if data.is_empty() {
            bail!(Contract, "training dataset is empty");
        }
        let b = self.config.batch_size;
        let mut picks = Vec::with_capacity(b);
        if self.needs_replacement(data.len()) {
            for _ in 0..b {
                picks.push(self.data_stream.below(data.len()));
            }
        } else {
            for _ in 0..b {
                if self.cursor >= self.order.len() || self.order.len() != data.len() {
                    self.order = (0..data.len()).collect();
                    self.data_stream.shuffle(&mut self.order);
                    self.cursor = 0;
                }
                picks.push(self.order[self.cursor]);
                self.cursor += 1;
            }
        }
        let mut volumes = Vec::with_capacity(b);
        for i in picks {
            volumes.push(augment(&data[i], &self.config.augmentation, &mut self.data_stream)?);
        }
        let refs: Vec<&VoxelGrid> = volumes.iter().collect();
        stack(&refs)
    }

    fn prior(&mut self, n: usize) -> Result<Var<T>> {
        let l = self.config.latent_dim;
        Ok(Var::constant(Tensor::new(alloc::vec![n, l], self.stream.fill_normal(n * l))?))
    }

    /// One D → C → G/E iteration on a preprocessed batch `[N, 1, D, H, W]`.
    pub fn train_iteration(&mut self, batch: &Tensor<T>) -> Result<LossRecord> {
        let x = Var::constant(batch.clone());
        let n = batch.shape()[0];
        let lambda1 = self.config.weights.lambda1;
        let mut record = LossRecord {
            iteration: self.iteration + 1,
            l_d: f64::NAN,
            l_c: f64::NAN,
            l_g: f64::NAN,
            gp_d: f64::NAN,
            gp_c: f64::NAN,
        };

        for _ in 0..self.config.ratio.d {
            let z_r = self.prior(n)?;
            let b = &mut self.bundle;
            let z_e = b.encoder.forward(&x, Mode::FROZEN)?;
            let terms = l_d(
                &mut WithMode(&mut b.discriminator, Mode::TRAIN),
                &mut WithMode(&mut b.generator, Mode::FROZEN),
                &x,
                &z_e,
                &z_r,
                lambda1,
                &mut self.stream,
            )?;
            record.l_d = finite("L_D", terms.total.data()[0].as_f64())?;
            record.gp_d = finite("GP_D", terms.penalty)?;
            backward(&terms.total, false)?;
            self.optimizers[1].step(&mut b.discriminator.parameters_mut())?;
            b.zero_grad();
        }

        for _ in 0..self.config.ratio.c {
            let z_r = self.prior(n)?;
            let b = &mut self.bundle;
            let z_e = b.encoder.forward(&x, Mode::FROZEN)?;
            let terms = l_c(
                &mut WithMode(&mut b.code_discriminator, Mode::TRAIN),
                &z_e,
                &z_r,
                lambda1,
                &mut self.stream,
            )?;
            record.l_c = finite("L_C", terms.total.data()[0].as_f64())?;
            record.gp_c = finite("GP_C", terms.penalty)?;
            backward(&terms.total, false)?;
            self.optimizers[2].step(&mut b.code_discriminator.parameters_mut())?;
            b.zero_grad();
        }

        for _ in 0..self.config.ratio.g {
            let z_r = self.prior(n)?;
            let b = &mut self.bundle;
            let terms = generator_loss(
                self.config.loss,
                &mut WithMode(&mut b.discriminator, Mode::FROZEN),
                &mut WithMode(&mut b.generator, Mode::TRAIN),
                &mut WithMode(&mut b.code_discriminator, Mode::FROZEN),
                &mut WithMode(&mut b.encoder, Mode::TRAIN),
                &x,
                &z_r,
                &self.config.weights,
            )?;
            record.l_g = finite("L_G", terms.total.data()[0].as_f64())?;
            backward(&terms.total, false)?;
            let mut params = b.generator.parameters_mut();
            params.extend(b.encoder.parameters_mut());
            self.optimizers[0].step(&mut params)?;
            b.zero_grad();
        }

        self.iteration += 1;
        Ok(record)
    }

    /// Draws the next minibatch from `data` and trains on it.
    pub fn step(&mut self, data: &[VoxelGrid]) -> Result<LossRecord> {
        let batch = self.next_batch(data)?;
        self.train_iteration(&batch)
    }

    /// Parameters, buffers, optimizer moments, streams and data order.
    pub fn export_state(&self) -> TrainingState<T> {
        let mut tensors = Vec::new();
        for net in self.bundle.networks() {
            for p in net.parameters() {
                tensors.push((String::from(p.name()), p.value().data().to_vec()));
            }
            tensors.extend(net.buffers());
        }
        let mut words = Vec::new();
        for (g, opt) in GROUPS.iter().zip(&self.optimizers) {
            for (i, (m, v)) in opt.state.m.iter().zip(&opt.state.v).enumerate() {
                tensors.push((format!("optim.{g}.{i}.m"), m.data().to_vec()));
                tensors.push((format!("optim.{g}.{i}.v"), v.data().to_vec()));
            }
            words.push((format!("optim.{g}.step"), alloc::vec![opt.state.step]));
        }
        words.push((String::from("stream.train"), self.stream.to_words().to_vec()));
        words.push((String::from("stream.data"), self.data_stream.to_words().to_vec()));
        words.push((String::from("data.order"), self.order.iter().map(|&i| i as u64).collect()));
        words.push((String::from("data.cursor"), alloc::vec![self.cursor as u64]));
        TrainingState {
            iteration: self.iteration,
            tensors,
            words,
        }
    }

    /// Restores everything [`Trainer::export_state`] wrote. Every live
    /// parameter, buffer and moment must be present.
    pub fn import_state(&mut self, state: &TrainingState<T>) -> Result<()> {
        let find = |name: &str| -> Result<&Vec<T>> {
            state
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Contract(format!("state lacks `{name}`")))
        };
        let word = |name: &str| -> Result<&Vec<u64>> {
            state
                .words
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::Contract(format!("state lacks `{name}`")))
        };
        for net in self.bundle.networks_mut() {
            for p in net.parameters_mut() {
                let values = find(p.name())?;
                let shape = p.shape().to_vec();
                p.set(Tensor::new(shape, values.clone())?)?;
            }
            let names: Vec<String> = net.buffers().into_iter().map(|(n, _)| n).collect();
            for name in names {
                net.set_buffer(&name, find(&name)?)?;
            }
        }
        for (g, opt) in GROUPS.iter().zip(self.optimizers.iter_mut()) {
            let mut st = AdamState {
                step: 0,
                m: Vec::new(),
                v: Vec::new(),
            };
            for (i, m) in opt.state.m.iter().enumerate() {
                let shape = m.shape().to_vec();
                st.m.push(Tensor::new(shape.clone(), find(&format!("optim.{g}.{i}.m"))?.clone())?);
                st.v.push(Tensor::new(shape, find(&format!("optim.{g}.{i}.v"))?.clone())?);
            }
            st.step = *word(&format!("optim.{g}.step"))?
                .first()
                .ok_or_else(|| Error::Contract(String::from("empty optimizer step")))?;
            opt.state = st;
        }
        self.stream = SeedStream::from_words(word("stream.train")?)?;
        self.data_stream = SeedStream::from_words(word("stream.data")?)?;
        self.order = word("data.order")?.iter().map(|&i| i as usize).collect();
        self.cursor = word("data.cursor")?.first().copied().unwrap_or(0) as usize;
        self.iteration = state.iteration;
        Ok(())
    }

    /// Number of values `export_state` writes for parameters.
    pub fn parameter_count(&self) -> usize {
        self.bundle.parameter_count()
    }

    pub fn optimizer_kind(&self, group: usize) -> OptimizerKind {
        self.optimizers[group].config.kind
    }
}
