use alloc::vec::Vec;

use super::{mae, mmd, ms_ssim_batch_protocol, ncc, sample_without_replacement, Kernel, SsimConfig, Summary};
use crate::autodiff::Var;
use crate::error::{bail, Result};
use crate::networks::{AlphaGanBundle, Mode, Network};
use crate::random::SeedStream;
use crate::tensor::{Real, Tensor};
use crate::volume::{stack, VoxelGrid};

/// Comparison counts and metric settings of an evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub n_generated: usize,
    /// Random real/generated pairs scored with NCC and MAE.
    pub pair_comparisons: usize,
    pub mmd_trials: usize,
    /// Volumes drawn from each set per discrepancy trial.
    pub mmd_set_size: usize,
    pub ms_ssim_trials: usize,
    pub ms_ssim_batch: usize,
    pub kernel: Kernel,
    pub ssim: SsimConfig,
    /// Latent batch used while generating.
    pub generation_batch: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Counts proportional to the real set: 100 pair comparisons and 100
    /// discrepancy trials per real volume, and ten MS-SSIM pair comparisons
    /// per real volume in batches of eight.
    pub fn scaled(n_real: usize, min_extent: usize, seed: u64) -> Self {
        let batch = 8;
        let pairs_per_trial = batch * (batch - 1) / 2;
        Self {
            n_generated: n_real.max(batch),
            pair_comparisons: 100 * n_real,
            mmd_trials: 100 * n_real,
            mmd_set_size: batch,
            ms_ssim_trials: (10 * n_real).div_ceil(pairs_per_trial).max(1),
            ms_ssim_batch: batch,
            kernel: Kernel::Linear,
            ssim: SsimConfig::for_extent(min_extent),
            generation_batch: 8,
            seed,
        }
    }
}

/// Metric summaries in table order: MS-SSIM, NCC, MAE, MMD.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub ms_ssim_generated: Summary,
    pub ms_ssim_real: Summary,
    pub ncc: Summary,
    pub mae: Summary,
    pub mmd: Summary,
    pub n_real: usize,
    pub protocol: ProtocolConfig,
}

impl MetricReport {
    /// MS-SSIM pair comparisons behind each MS-SSIM summary.
    pub fn ms_ssim_comparisons(&self) -> usize {
        let b = self.protocol.ms_ssim_batch;
        self.protocol.ms_ssim_trials * b * (b - 1) / 2
    }
}

/// Draws `n` volumes from the generator with standard-normal latents.
pub fn generate_volumes<T: Real>(
    generator: &mut Network<T>,
    n: usize,
    batch: usize,
    stream: &mut SeedStream,
) -> Result<Vec<VoxelGrid>> {
    let latent = generator.input_shape().to_vec();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let b = batch.max(1).min(n - out.len());
        let mut shape = alloc::vec![b];
        shape.extend_from_slice(&latent);
        let z = Var::constant(Tensor::new(shape, stream.fill_normal(b * latent.iter().product::<usize>()))?);
        let y = generator.forward(&z, Mode::EVAL)?;
        for i in 0..b {
            out.push(VoxelGrid::from_tensor(y.value(), i)?);
        }
    }
    Ok(out)
}

/// `G(E(x))` for each volume, in inference mode.
pub fn reconstruct<T: Real>(bundle: &mut AlphaGanBundle<T>, volumes: &[&VoxelGrid]) -> Result<Vec<VoxelGrid>> {
    let x = Var::constant(stack::<T>(volumes)?);
    let z = bundle.encoder.forward(&x, Mode::EVAL)?;
    let y = bundle.generator.forward(&z, Mode::EVAL)?;
    (0..volumes.len()).map(|i| VoxelGrid::from_tensor(y.value(), i)).collect()
}

/// Scores a generated set against a real set under the protocol.
pub fn evaluate_sets(real: &[VoxelGrid], generated: &[VoxelGrid], protocol: &ProtocolConfig) -> Result<MetricReport> {
    if real.is_empty() || generated.is_empty() {
        bail!(Contract, "evaluation needs non-empty real and generated sets");
    }
    let mut stream = SeedStream::with_stream(protocol.seed, 1);
    let mut nccs = Vec::with_capacity(protocol.pair_comparisons);
    let mut maes = Vec::with_capacity(protocol.pair_comparisons);
    for _ in 0..protocol.pair_comparisons {
        let r = &real[stream.below(real.len())];
        let g = &generated[stream.below(generated.len())];
        nccs.push(ncc(r, g)?);
        maes.push(mae(r, g)?);
    }
    let mut mmds = Vec::with_capacity(protocol.mmd_trials);
    for _ in 0..protocol.mmd_trials {
        let a = sample_without_replacement(real, protocol.mmd_set_size.min(real.len()), &mut stream)?;
        let b = sample_without_replacement(generated, protocol.mmd_set_size.min(generated.len()), &mut stream)?;
        mmds.push(mmd(&a, &b, protocol.kernel)?);
    }
    let draw_from = |set: &[VoxelGrid]| {
        let set: Vec<VoxelGrid> = set.to_vec();
        move |n: usize, s: &mut SeedStream| -> Result<Vec<VoxelGrid>> {
            Ok(sample_without_replacement(&set, n, s)?.into_iter().cloned().collect())
        }
    };
    let ms_real = ms_ssim_batch_protocol(draw_from(real), protocol.ms_ssim_trials, protocol.ms_ssim_batch, &protocol.ssim, &mut stream)?;
    let ms_gen = ms_ssim_batch_protocol(
        draw_from(generated),
        protocol.ms_ssim_trials,
        protocol.ms_ssim_batch,
        &protocol.ssim,
        &mut stream,
    )?;
    Ok(MetricReport {
        ms_ssim_generated: ms_gen,
        ms_ssim_real: ms_real,
        ncc: Summary::of(&nccs)?,
        mae: Summary::of(&maes)?,
        mmd: Summary::of(&mmds)?,
        n_real: real.len(),
        protocol: *protocol,
    })
}

/// Generates `protocol.n_generated` volumes from the bundle and scores them
/// against `real`.
pub fn evaluate_model<T: Real>(
    bundle: &mut AlphaGanBundle<T>,
    real: &[VoxelGrid],
    protocol: &ProtocolConfig,
) -> Result<MetricReport> {
    if real.is_empty() {
        bail!(Contract, "evaluation needs real volumes");
    }
    let mut stream = SeedStream::with_stream(protocol.seed, 0);
    let generated = generate_volumes(&mut bundle.generator, protocol.n_generated, protocol.generation_batch, &mut stream)?;
    evaluate_sets(real, &generated, protocol)
}
