//! Adversarial, code, reconstruction and gradient-penalty losses of the
//! alpha-GAN. Networks enter as [`Model`]s so the parameter partition of each
//! loss is decided by the caller's forward mode: networks that must not be
//! updated by a loss are passed frozen.

use alloc::vec::Vec;

use crate::autodiff::{grad, Var};
use crate::error::{bail, Result};
use crate::networks::{Mode, Network, Preset};
use crate::random::SeedStream;
use crate::tensor::{Real, Tensor};

/// A differentiable map from a batch to a batch.
pub trait Model<T: Real> {
    fn apply(&mut self, x: &Var<T>) -> Result<Var<T>>;
}

impl<T: Real, F: FnMut(&Var<T>) -> Result<Var<T>>> Model<T> for F {
    fn apply(&mut self, x: &Var<T>) -> Result<Var<T>> {
        self(x)
    }
}

/// A network evaluated in a fixed mode.
pub struct WithMode<'a, T: Real>(pub &'a mut Network<T>, pub Mode);

impl<T: Real> Model<T> for WithMode<'_, T> {
    fn apply(&mut self, x: &Var<T>) -> Result<Var<T>> {
        self.0.forward(x, self.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Gradient penalties, and L1/MSE in `l_g2`.
    pub lambda1: f64,
    /// L1 in `l_g1`, MSE in `l_g3`.
    pub lambda2: f64,
    /// Gradient difference loss in `l_g3`.
    pub lambda3: f64,
    /// Exponent of the gradient difference loss.
    pub gdl_alpha: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
            gdl_alpha: 1.0,
        }
    }

    pub fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::AdniBaseline | Preset::SigmaRat1 => Self::new(10.0, 10.0, 0.0),
            Preset::SigmaRat2 => Self::new(100.0, 100.0, 0.01),
        }
    }
}

/// The three generator/encoder objectives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorLoss {
    /// Adversarial + code + λ2·L1.
    G1,
    /// Adversarial + code + λ1·L1 + λ1·MSE.
    G2,
    /// Adversarial + code + λ3·GDL + λ2·MSE.
    G3,
}

impl GeneratorLoss {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorLoss::G1 => "l_g1",
            GeneratorLoss::G2 => "l_g2",
            GeneratorLoss::G3 => "l_g3",
        }
    }

    pub fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::AdniBaseline => GeneratorLoss::G1,
            Preset::SigmaRat1 => GeneratorLoss::G2,
            Preset::SigmaRat2 => GeneratorLoss::G3,
        }
    }
}

impl core::fmt::Display for GeneratorLoss {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for GeneratorLoss {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l_g1" => Ok(GeneratorLoss::G1),
            "l_g2" => Ok(GeneratorLoss::G2),
            "l_g3" => Ok(GeneratorLoss::G3),
            _ => bail!(Contract, "unknown generator loss `{s}`"),
        }
    }
}

/// Batch mean of per-sample scalar outputs.
fn expectation<T: Real>(scores: &Var<T>) -> Result<Var<T>> {
    per_sample_scalar(scores)?;
    scores.mean()
}

fn per_sample_scalar<T: Real>(out: &Var<T>) -> Result<()> {
    let s = out.shape();
    if s.is_empty() || s[1..].iter().product::<usize>() != 1 {
        bail!(Contract, "expected one score per sample, got shape {:?}", s);
    }
    Ok(())
}

fn same_shape<T: Real>(a: &Var<T>, b: &Var<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Contract, "{what}: shapes {:?} and {:?} differ", a.shape(), b.shape());
    }
    Ok(())
}

fn value<T: Real>(v: &Var<T>) -> f64 {
    v.data()[0].as_f64()
}

/// Mean absolute voxel difference.
pub fn l1<T: Real>(x: &Var<T>, y: &Var<T>) -> Result<Var<T>> {
    same_shape(x, y, "l1")?;
    x.sub(y)?.abs().mean()
}

/// Mean squared voxel difference.
pub fn mse<T: Real>(x: &Var<T>, y: &Var<T>) -> Result<Var<T>> {
    same_shape(x, y, "mse")?;
    x.sub(y)?.square().mean()
}

/// Sum over the three spatial axes of the mean of
/// `| |Δx| - |Δy| |^alpha`, with `Δ` the forward difference.
pub fn gdl<T: Real>(x: &Var<T>, y: &Var<T>, alpha: f64) -> Result<Var<T>> {
    same_shape(x, y, "gdl")?;
    if x.shape().len() != 5 {
        bail!(Dimension, "gdl expects [N, C, D, H, W], got {:?}", x.shape());
    }
    let mut total: Option<Var<T>> = None;
    for axis in 2..5 {
        let dx = x.forward_diff(axis)?.abs();
        let dy = y.forward_diff(axis)?.abs();
        let mut term = dx.sub(&dy)?.abs();
        if alpha != 1.0 {
            term = term.powf(T::lit(alpha));
        }
        let term = term.mean()?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("three spatial axes"))
}

/// `ε·a + (1 - ε)·b` with one `ε` per sample.
pub fn interpolate<T: Real>(a: &Tensor<T>, b: &Tensor<T>, eps: &[f64]) -> Result<Tensor<T>> {
    if a.shape() != b.shape() || a.shape().is_empty() || a.shape()[0] != eps.len() {
        bail!(
            Contract,
            "interpolation of {:?} and {:?} with {} weights",
            a.shape(),
            b.shape(),
            eps.len()
        );
    }
    let per = a.numel() / eps.len();
    let data: Vec<T> = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (&x, &y))| {
            let e = T::lit(eps[i / per]);
            e * x + (T::one() - e) * y
        })
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `E[(‖∇f(x̂)‖₂ - 1)²]` at the given interpolation weights. The result
/// stays differentiable with respect to the parameters inside `f`.
pub fn gradient_penalty_at<T: Real>(f: &mut impl Model<T>, a: &Var<T>, b: &Var<T>, eps: &[f64]) -> Result<Var<T>> {
    let x_hat = Var::leaf(interpolate(a.value(), b.value(), eps)?);
    let out = f.apply(&x_hat)?;
    per_sample_scalar(&out)?;
    if out.shape()[0] != eps.len() {
        bail!(Contract, "critic returned {} scores for {} samples", out.shape()[0], eps.len());
    }
    let g = grad(&out.sum()?, &[&x_hat], true)?.remove(0);
    let norm = if g.shape().len() > 1 {
        g.l2_norm_per_sample()?
    } else {
        g.abs()
    };
    norm.add_scalar(-1.0).square().mean()
}

/// Gradient penalty with `ε ~ uniform(0, 1)` drawn per sample from `stream`.
pub fn gradient_penalty<T: Real>(f: &mut impl Model<T>, a: &Var<T>, b: &Var<T>, stream: &mut SeedStream) -> Result<Var<T>> {
    same_shape(a, b, "gradient penalty")?;
    let n = a.shape().first().copied().unwrap_or(0);
    let eps: Vec<f64> = (0..n).map(|_| stream.uniform()).collect();
    gradient_penalty_at(f, a, b, &eps)
}

/// `-E[D(G(z_e))] - E[D(G(z_r))]`.
pub fn l_gd<T: Real>(d: &mut impl Model<T>, g: &mut impl Model<T>, z_e: &Var<T>, z_r: &Var<T>) -> Result<Var<T>> {
    if z_e.shape().get(1..) != z_r.shape().get(1..) {
        bail!(Contract, "latent shapes {:?} and {:?} differ", z_e.shape(), z_r.shape());
    }
    let fake_e = expectation(&d.apply(&g.apply(z_e)?)?)?;
    let fake_r = expectation(&d.apply(&g.apply(z_r)?)?)?;
    Ok(fake_e.add(&fake_r)?.neg())
}

/// A generator objective and its parts.
#[derive(Clone)]
pub struct GeneratorTerms<T: Real> {
    pub total: Var<T>,
    /// `L_GD`.
    pub adversarial: f64,
    /// `E[C(z_e)]`.
    pub code: f64,
    pub l1: f64,
    pub mse: f64,
    pub gdl: f64,
}

/// Generator/encoder objective of the chosen kind; `z_e = E(x_real)` is
/// computed inside. Pass D and C frozen to train only G and E.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<T: Real>(
    kind: GeneratorLoss,
    d: &mut impl Model<T>,
    g: &mut impl Model<T>,
    c: &mut impl Model<T>,
    e: &mut impl Model<T>,
    x_real: &Var<T>,
    z_r: &Var<T>,
    weights: &LossWeights,
) -> Result<GeneratorTerms<T>> {
    let z_e = e.apply(x_real)?;
    if z_e.shape().get(1..) != z_r.shape().get(1..) {
        bail!(Contract, "encoded latent {:?} does not match prior sample {:?}", z_e.shape(), z_r.shape());
    }
    let recon = g.apply(&z_e)?;
    same_shape(&recon, x_real, "reconstruction")?;
    let adversarial = expectation(&d.apply(&recon)?)?
        .add(&expectation(&d.apply(&g.apply(z_r)?)?)?)?
        .neg();
    let code = expectation(&c.apply(&z_e)?)?;
    let l1_term = l1(x_real, &recon)?;
    let mse_term = mse(x_real, &recon)?;
    let mut total = adversarial.sub(&code)?;
    let mut gdl_value = 0.0;
    match kind {
        GeneratorLoss::G1 => {
            total = total.add(&l1_term.scale(weights.lambda2))?;
        }
        GeneratorLoss::G2 => {
            total = total
                .add(&l1_term.scale(weights.lambda1))?
                .add(&mse_term.scale(weights.lambda1))?;
        }
        GeneratorLoss::G3 => {
            let gdl_term = gdl(x_real, &recon, weights.gdl_alpha)?;
            gdl_value = value(&gdl_term);
            total = total
                .add(&gdl_term.scale(weights.lambda3))?
                .add(&mse_term.scale(weights.lambda2))?;
        }
    }
    Ok(GeneratorTerms {
        adversarial: value(&adversarial),
        code: value(&code),
        l1: value(&l1_term),
        mse: value(&mse_term),
        gdl: gdl_value,
        total,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn l_g1<T: Real>(
    d: &mut impl Model<T>,
    g: &mut impl Model<T>,
    c: &mut impl Model<T>,
    e: &mut impl Model<T>,
    x_real: &Var<T>,
    z_r: &Var<T>,
    weights: &LossWeights,
) -> Result<GeneratorTerms<T>> {
    generator_loss(GeneratorLoss::G1, d, g, c, e, x_real, z_r, weights)
}

#[allow(clippy::too_many_arguments)]
pub fn l_g2<T: Real>(
    d: &mut impl Model<T>,
    g: &mut impl Model<T>,
    c: &mut impl Model<T>,
    e: &mut impl Model<T>,
    x_real: &Var<T>,
    z_r: &Var<T>,
    weights: &LossWeights,
) -> Result<GeneratorTerms<T>> {
    generator_loss(GeneratorLoss::G2, d, g, c, e, x_real, z_r, weights)
}

#[allow(clippy::too_many_arguments)]
pub fn l_g3<T: Real>(
    d: &mut impl Model<T>,
    g: &mut impl Model<T>,
    c: &mut impl Model<T>,
    e: &mut impl Model<T>,
    x_real: &Var<T>,
    z_r: &Var<T>,
    weights: &LossWeights,
) -> Result<GeneratorTerms<T>> {
    generator_loss(GeneratorLoss::G3, d, g, c, e, x_real, z_r, weights)
}

/// A critic objective and its parts.
#[derive(Clone)]
pub struct CriticTerms<T: Real> {
    pub total: Var<T>,
    pub penalty: f64,
}

/// `E[C(z_e)] - E[C(z_r)] + λ1·GP`, penalizing along segments between the
/// encoded and prior latents. `z_e` is treated as a constant.
pub fn l_c<T: Real>(
    c: &mut impl Model<T>,
    z_e: &Var<T>,
    z_r: &Var<T>,
    lambda1: f64,
    stream: &mut SeedStream,
) -> Result<CriticTerms<T>> {
    same_shape(z_e, z_r, "code critic latents")?;
    let z_e = z_e.detach();
    let encoded = expectation(&c.apply(&z_e)?)?;
    let prior = expectation(&c.apply(z_r)?)?;
    let gp = gradient_penalty(c, &z_e, z_r, stream)?;
    Ok(CriticTerms {
        penalty: value(&gp),
        total: encoded.sub(&prior)?.add(&gp.scale(lambda1))?,
    })
}

/// `-L_GD - 2·E[D(x_real)] + λ1·GP`, penalizing along segments between real
/// volumes and `G(z_r)`. Generator outputs are treated as constants.
pub fn l_d<T: Real>(
    d: &mut impl Model<T>,
    g: &mut impl Model<T>,
    x_real: &Var<T>,
    z_e: &Var<T>,
    z_r: &Var<T>,
    lambda1: f64,
    stream: &mut SeedStream,
) -> Result<CriticTerms<T>> {
    let recon = g.apply(&z_e.detach())?.detach();
    let fake = g.apply(&z_r.detach())?.detach();
    same_shape(&recon, x_real, "discriminator inputs")?;
    same_shape(&fake, x_real, "discriminator inputs")?;
    let neg_gd = expectation(&d.apply(&recon)?)?.add(&expectation(&d.apply(&fake)?)?)?;
    let real = expectation(&d.apply(x_real)?)?;
    let gp = gradient_penalty(d, x_real, &fake, stream)?;
    Ok(CriticTerms {
        penalty: value(&gp),
        total: neg_gd.sub(&real.scale(2.0))?.add(&gp.scale(lambda1))?,
    })
}
