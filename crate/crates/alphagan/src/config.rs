//! Flat `key = value` text form of a [`TrainingConfig`]. Lines starting with
//! `#` are comments. A `preset` key resets every other field to that
//! preset's defaults before the remaining keys apply.

use std::str::FromStr;

use alphagan_core::losses::GeneratorLoss;
use alphagan_core::networks::Preset;
use alphagan_core::optim::{OptimizerConfig, OptimizerKind};
use alphagan_core::train::TrainingConfig;
use alphagan_core::volume::{AugmentationPolicy, Transform};

use crate::error::{Error, Result};

pub type KeyValues = Vec<(String, String)>;

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn format_key_values(kv: &[(String, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("`{key}`: cannot parse `{value}`")))
}

const GROUPS: [&str; 3] = ["ge", "d", "c"];

fn group_mut<'a>(config: &'a mut TrainingConfig, group: &str) -> Option<&'a mut OptimizerConfig> {
    let o = &mut config.optimizers;
    match group {
        "ge" => Some(&mut o.generator_encoder),
        "d" => Some(&mut o.discriminator),
        "c" => Some(&mut o.code_discriminator),
        _ => None,
    }
}

fn transform_text(t: &Transform) -> String {
    match *t {
        Transform::Zoom { min, max } => format!("zoom:{min}:{max}"),
        Transform::Rotation { max_degrees } => format!("rotation:{max_degrees}"),
        Transform::GaussianNoise { max_sigma } => format!("noise:{max_sigma}"),
        Transform::Flip { axis } => format!("flip:{axis}"),
        Transform::Translation { max_shift } => format!("translation:{max_shift}"),
        Transform::IntensityScale { min, max } => format!("intensity:{min}:{max}"),
    }
}

/// `none`, `standard`, `flip_only`, or `;`-separated `name:args@p` items
/// such as `zoom:0.9:1.1@0.5;flip:0@1`.
pub fn parse_augmentation(value: &str) -> Result<Vec<(Transform, f64)>> {
    match value {
        "none" | "" => return Ok(Vec::new()),
        "standard" => return Ok(AugmentationPolicy::standard().transforms),
        "flip_only" => return Ok(AugmentationPolicy::flip_only().transforms),
        _ => {}
    }
    let key = "augmentation";
    let mut out = Vec::new();
    for item in value.split(';') {
        let (spec, p) = item
            .split_once('@')
            .ok_or_else(|| Error::Format(format!("`{key}`: `{item}` lacks `@probability`")))?;
        let parts: Vec<&str> = spec.split(':').collect();
        let arity = |n: usize| {
            if parts.len() == n + 1 {
                Ok(())
            } else {
                Err(Error::Format(format!("`{key}`: `{spec}` expects {n} argument(s)")))
            }
        };
        let t = match parts[0] {
            "zoom" | "intensity" => {
                arity(2)?;
                let (min, max) = (num(key, parts[1])?, num(key, parts[2])?);
                if parts[0] == "zoom" {
                    Transform::Zoom { min, max }
                } else {
                    Transform::IntensityScale { min, max }
                }
            }
            "rotation" => {
                arity(1)?;
                Transform::Rotation {
                    max_degrees: num(key, parts[1])?,
                }
            }
            "noise" => {
                arity(1)?;
                Transform::GaussianNoise {
                    max_sigma: num(key, parts[1])?,
                }
            }
            "flip" => {
                arity(1)?;
                Transform::Flip { axis: num(key, parts[1])? }
            }
            "translation" => {
                arity(1)?;
                Transform::Translation {
                    max_shift: num(key, parts[1])?,
                }
            }
            other => return Err(Error::Format(format!("`{key}`: unknown transform `{other}`"))),
        };
        out.push((t, num(key, p)?));
    }
    Ok(out)
}

/// Sets one field. `lr` sets the learning rate of every group.
pub fn apply(config: &mut TrainingConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "preset" => *config = TrainingConfig::for_preset(Preset::from_str(value)?),
        "loss" => config.loss = GeneratorLoss::from_str(value)?,
        "lambda1" => config.weights.lambda1 = num(key, value)?,
        "lambda2" => config.weights.lambda2 = num(key, value)?,
        "lambda3" => config.weights.lambda3 = num(key, value)?,
        "gdl_alpha" => config.weights.gdl_alpha = num(key, value)?,
        "latent_dim" => config.latent_dim = num(key, value)?,
        "iterations" => config.iterations = num(key, value)?,
        "batch_size" => config.batch_size = num(key, value)?,
        "ratio_d" => config.ratio.d = num(key, value)?,
        "ratio_c" => config.ratio.c = num(key, value)?,
        "ratio_g" => config.ratio.g = num(key, value)?,
        "seed" => config.seed = num(key, value)?,
        "checkpoint_interval" => config.checkpoint_interval = num(key, value)?,
        "width" => config.width = num(key, value)?,
        "volume" => {
            let parts = value.split(',').map(|p| num(key, p.trim())).collect::<Result<Vec<usize>>>()?;
            config.volume = match parts[..] {
                [e] => [e; 3],
                [d, h, w] => [d, h, w],
                _ => return Err(Error::Format(format!("`volume` takes 1 or 3 extents, got `{value}`"))),
            };
        }
        "lr" => config.optimizers.set_learning_rate(num(key, value)?),
        "augmentation" => config.augmentation.transforms = parse_augmentation(value)?,
        "augmentation_fill" => config.augmentation.fill = num(key, value)?,
        _ => {
            let unknown = || Error::Format(format!("unknown configuration key `{key}`"));
            let (group, field) = key
                .strip_prefix("optimizer.")
                .and_then(|r| r.split_once('.'))
                .ok_or_else(unknown)?;
            let o = group_mut(config, group).ok_or_else(unknown)?;
            match field {
                "kind" => o.kind = OptimizerKind::from_str(value)?,
                "lr" => o.learning_rate = num(key, value)?,
                "beta1" => o.beta1 = num(key, value)?,
                "beta2" => o.beta2 = num(key, value)?,
                "eps" => o.eps = num(key, value)?,
                "weight_decay" => o.weight_decay = num(key, value)?,
                _ => return Err(unknown()),
            }
        }
    }
    Ok(())
}

/// Applies pairs in order, with any `preset` key first.
pub fn apply_all(config: &mut TrainingConfig, kv: &[(String, String)]) -> Result<()> {
    let (presets, rest): (Vec<_>, Vec<_>) = kv.iter().partition(|(k, _)| k == "preset");
    for (k, v) in presets.into_iter().chain(rest) {
        apply(config, k, v)?;
    }
    Ok(())
}

pub fn from_key_values(kv: &[(String, String)]) -> Result<TrainingConfig> {
    let mut config = TrainingConfig::for_preset(Preset::SigmaRat2);
    apply_all(&mut config, kv)?;
    Ok(config)
}

/// Every field; `from_key_values(&to_key_values(c)) == c`.
pub fn to_key_values(config: &TrainingConfig) -> KeyValues {
    let mut kv: KeyValues = Vec::new();
    let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
    let w = &config.weights;
    let [d, h, wd] = config.volume;
    put("preset", config.preset.name().into());
    put("loss", config.loss.name().into());
    put("lambda1", w.lambda1.to_string());
    put("lambda2", w.lambda2.to_string());
    put("lambda3", w.lambda3.to_string());
    put("gdl_alpha", w.gdl_alpha.to_string());
    put("latent_dim", config.latent_dim.to_string());
    put("iterations", config.iterations.to_string());
    put("batch_size", config.batch_size.to_string());
    put("ratio_d", config.ratio.d.to_string());
    put("ratio_c", config.ratio.c.to_string());
    put("ratio_g", config.ratio.g.to_string());
    put("seed", config.seed.to_string());
    put("checkpoint_interval", config.checkpoint_interval.to_string());
    put("volume", format!("{d},{h},{wd}"));
    put("width", config.width.to_string());
    let o = &config.optimizers;
    for (g, c) in GROUPS.iter().zip([&o.generator_encoder, &o.discriminator, &o.code_discriminator]) {
        put(&format!("optimizer.{g}.kind"), c.kind.name().into());
        put(&format!("optimizer.{g}.lr"), c.learning_rate.to_string());
        put(&format!("optimizer.{g}.beta1"), c.beta1.to_string());
        put(&format!("optimizer.{g}.beta2"), c.beta2.to_string());
        put(&format!("optimizer.{g}.eps"), c.eps.to_string());
        put(&format!("optimizer.{g}.weight_decay"), c.weight_decay.to_string());
    }
    let aug = &config.augmentation.transforms;
    let aug = if aug.is_empty() {
        "none".to_string()
    } else {
        aug.iter()
            .map(|(t, p)| format!("{}@{p}", transform_text(t)))
            .collect::<Vec<_>>()
            .join(";")
    };
    put("augmentation", aug);
    put("augmentation_fill", config.augmentation.fill.to_string());
    kv
}
