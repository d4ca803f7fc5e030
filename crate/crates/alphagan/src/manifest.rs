//! Run manifests: one `<command>.manifest` key-value file per invocation,
//! enough to repeat it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{format_key_values, parse_key_values, KeyValues};
use crate::error::{Error, Result};

pub const SEED_ENV: &str = "ALPHAGAN_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Resolved settings of the run.
    pub config: KeyValues,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

pub fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Arguments are joined with the ASCII unit separator, which never occurs in
/// a command line.
const SEP: char = '\u{1f}';

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: u64) -> Self {
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Vec::new(),
            started: unix_seconds(),
            finished: 0,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest", self.command)
    }

    pub fn to_text(&self) -> String {
        let paths = |ps: &[PathBuf]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(&SEP.to_string());
        let mut kv: KeyValues = vec![
            ("command".into(), self.command.clone()),
            ("argv".into(), self.argv.join(&SEP.to_string())),
            ("seed".into(), self.seed.to_string()),
            ("version".into(), self.version.clone()),
            ("inputs".into(), paths(&self.inputs)),
            ("outputs".into(), paths(&self.outputs)),
            ("started".into(), self.started.to_string()),
            ("finished".into(), self.finished.to_string()),
        ];
        kv.extend(self.config.iter().map(|(k, v)| (format!("config.{k}"), v.clone())));
        format_key_values(&kv)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Format(format!("manifest lacks `{k}`")))
        };
        let list = |v: String| -> Vec<String> {
            if v.is_empty() {
                Vec::new()
            } else {
                v.split(SEP).map(String::from).collect()
            }
        };
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Format(format!("manifest `{k}` is not a number"))) };
        Ok(Self {
            command: get("command")?,
            argv: list(get("argv")?),
            seed: num("seed")?,
            version: get("version")?,
            inputs: list(get("inputs")?).into_iter().map(PathBuf::from).collect(),
            outputs: list(get("outputs")?).into_iter().map(PathBuf::from).collect(),
            config: kv
                .iter()
                .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
                .collect(),
            started: num("started")?,
            finished: num("finished")?,
        })
    }

    /// Stamps the finish time and writes the manifest into `dir`.
    pub fn finish(mut self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        self.finished = unix_seconds();
        let path = dir.as_ref().join(self.file_name());
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    RunManifest::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
