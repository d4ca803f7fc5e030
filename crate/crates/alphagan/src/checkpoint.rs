//! Versioned binary checkpoints: magic `AGAN`, a little-endian `u32`
//! version, an entry count, then length-prefixed `(name, kind, payload)`
//! entries. Tensors are stored as 32-bit floats.

use std::fs;
use std::path::Path;

use alphagan_core::networks::Preset;
use alphagan_core::tensor::Real;
use alphagan_core::train::{Trainer, TrainingConfig, TrainingState};

use crate::config::{format_key_values, from_key_values, parse_key_values, to_key_values};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_F32: u8 = 0;
const KIND_U64: u8 = 1;
const KIND_TEXT: u8 = 2;

const META_PRESET: &str = "meta.preset";
const META_ITERATION: &str = "meta.iteration";
const META_CONFIG: &str = "meta.config";

/// Everything needed to rebuild a trainer mid-run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub config: TrainingConfig,
    pub tensors: Vec<(String, Vec<f32>)>,
    pub words: Vec<(String, Vec<u64>)>,
}

fn is_parameter(name: &str) -> bool {
    !name.starts_with("optim.") && [".weight", ".bias", ".gamma", ".beta"].iter().any(|s| name.ends_with(s))
}

impl Checkpoint {
    pub fn from_trainer<T: Real>(trainer: &Trainer<T>) -> Self {
        let state = trainer.export_state();
        Self {
            iteration: state.iteration,
            config: trainer.config.clone(),
            tensors: state
                .tensors
                .into_iter()
                .map(|(n, v)| (n, v.into_iter().map(|x| x.as_f64() as f32).collect()))
                .collect(),
            words: state.words,
        }
    }

    pub fn preset(&self) -> Preset {
        self.config.preset
    }

    /// Number of trainable parameter values stored.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().filter(|(n, _)| is_parameter(n)).map(|(_, v)| v.len()).sum()
    }

    pub fn state<T: Real>(&self) -> TrainingState<T> {
        TrainingState {
            iteration: self.iteration,
            tensors: self
                .tensors
                .iter()
                .map(|(n, v)| (n.clone(), v.iter().map(|&x| T::lit(x as f64)).collect()))
                .collect(),
            words: self.words.clone(),
        }
    }

    /// Loads the stored state into a trainer built for the same preset.
    pub fn restore_into<T: Real>(&self, trainer: &mut Trainer<T>) -> Result<()> {
        if trainer.config.preset != self.preset() {
            return Err(alphagan_core::Error::Contract(format!(
                "checkpoint preset {} does not match trainer preset {}",
                self.preset().name(),
                trainer.config.preset.name()
            ))
            .into());
        }
        trainer.import_state(&self.state())?;
        Ok(())
    }

    /// A trainer at the stored iteration, using the stored configuration.
    pub fn trainer<T: Real>(&self) -> Result<Trainer<T>> {
        let mut t = Trainer::new(self.config.clone())?;
        self.restore_into(&mut t)?;
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let count = 3 + self.tensors.len() + self.words.len();
        out.extend_from_slice(&(count as u64).to_le_bytes());
        let mut entry = |name: &str, kind: u8, payload: &[u8]| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(kind);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        };
        entry(META_PRESET, KIND_TEXT, self.preset().name().as_bytes());
        entry(META_ITERATION, KIND_U64, &self.iteration.to_le_bytes());
        entry(META_CONFIG, KIND_TEXT, format_key_values(&to_key_values(&self.config)).as_bytes());
        for (name, values) in &self.tensors {
            let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            entry(name, KIND_F32, &payload);
        }
        for (name, values) in &self.words {
            let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            entry(name, KIND_U64, &payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let count = r.u64()?;
        let (mut preset, mut iteration, mut config) = (None, None, None);
        let mut tensors = Vec::new();
        let mut words = Vec::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let kind = r.take(1)?[0];
            let len = r.u64()? as usize;
            let payload = r.take(len)?;
            let text = || {
                std::str::from_utf8(payload).map_err(|_| Error::Format(format!("entry `{name}` is not UTF-8")))
            };
            let unit = match kind {
                KIND_F32 => 4,
                KIND_U64 => 8,
                KIND_TEXT => 1,
                k => return Err(Error::Format(format!("entry `{name}` has unknown kind {k}"))),
            };
            if payload.len() % unit != 0 {
                return Err(Error::Format(format!("entry `{name}` has a ragged payload")));
            }
            match (name.as_str(), kind) {
                (META_PRESET, KIND_TEXT) => preset = Some(text()?.parse::<Preset>()?),
                (META_CONFIG, KIND_TEXT) => config = Some(from_key_values(&parse_key_values(text()?)?)?),
                (META_ITERATION, KIND_U64) if payload.len() == 8 => {
                    iteration = Some(u64::from_le_bytes(payload.try_into().unwrap()))
                }
                (n, _) if n.starts_with("meta.") => {
                    return Err(Error::Format(format!("malformed metadata entry `{n}`")));
                }
                (_, KIND_F32) => tensors.push((
                    name,
                    payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                )),
                (_, KIND_U64) => words.push((
                    name,
                    payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
                )),
                _ => return Err(Error::Format(format!("unexpected text entry `{name}`"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let missing = |what: &str| Error::Format(format!("checkpoint lacks {what}"));
        let preset = preset.ok_or_else(|| missing(META_PRESET))?;
        let config = config.ok_or_else(|| missing(META_CONFIG))?;
        if config.preset != preset {
            return Err(Error::Format("preset entry disagrees with the stored configuration".into()));
        }
        Ok(Self {
            iteration: iteration.ok_or_else(|| missing(META_ITERATION))?,
            config,
            tensors,
            words,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("agan.partial");
    fs::write(&tmp, checkpoint.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
