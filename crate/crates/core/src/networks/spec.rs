//! Plain-text network specifications, one layer per line:
//!
//! ```text
//! role discriminator
//! conv n64k4s2p1 sn leaky_relu
//! conv n128k4s2p1 sn instance leaky_relu=0.2
//! dense n1k1s1p0 sn
//! ```
//!
//! A line is a layer kind, a layer code and any of the flags `sn`,
//! `instance`, `batch` and one activation (`linear`, `relu`, `tanh`,
//! `leaky_relu` or `leaky_relu=<slope>`). `#` starts a comment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::code::{parse_layer_code, LayerCode};
use crate::autodiff::Activation;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Generator,
    Discriminator,
    Encoder,
    CodeDiscriminator,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Generator, Role::Discriminator, Role::Encoder, Role::CodeDiscriminator];

    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Encoder => "encoder",
            Role::CodeDiscriminator => "code_discriminator",
        }
    }

    /// Input is a latent vector rather than a volume.
    pub fn takes_latent(self) -> bool {
        matches!(self, Role::Generator | Role::CodeDiscriminator)
    }
}

impl core::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parse {
                field: "role".into(),
                message: format!("unknown role `{s}`"),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Strided 3-D convolution.
    Conv,
    /// Transposed 3-D convolution.
    TransposedConv,
    /// Fully connected layer on flattened features.
    Dense,
    /// Fully connected layer reshaped to `[n, d, h, w]`; the spatial extent
    /// is solved so the following layers reach the volume shape.
    Project,
}

impl LayerKind {
    fn keyword(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::TransposedConv => "tconv",
            LayerKind::Dense => "dense",
            LayerKind::Project => "project",
        }
    }

    /// Output carries spatial axes.
    pub fn is_spatial(self) -> bool {
        !matches!(self, LayerKind::Dense)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    None,
    Instance,
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub code: LayerCode,
    pub spectral_norm: bool,
    pub norm: Norm,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, code: LayerCode) -> Self {
        Self {
            kind,
            code,
            spectral_norm: false,
            norm: Norm::None,
            activation: Activation::Linear,
        }
    }

    pub fn with_sn(mut self, on: bool) -> Self {
        self.spectral_norm = on;
        self
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }
}

/// An ordered layer list for one of the four networks. The last layer's
/// activation is the network's output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub role: Role,
    pub layers: Vec<LayerSpec>,
}

fn line_error(line: usize, message: String) -> Error {
    Error::Parse {
        field: format!("line {line}"),
        message,
    }
}

fn parse_layer(line: usize, words: &[&str]) -> Result<LayerSpec> {
    let kind = match words[0] {
        "conv" => LayerKind::Conv,
        "tconv" => LayerKind::TransposedConv,
        "dense" => LayerKind::Dense,
        "project" => LayerKind::Project,
        other => return Err(line_error(line, format!("unknown layer kind `{other}`"))),
    };
    let code_text = words
        .get(1)
        .ok_or_else(|| line_error(line, "missing layer code".into()))?;
    let code = parse_layer_code(code_text)?;
    if !kind.is_spatial() || kind == LayerKind::Project {
        if code.k != 1 || code.s != 1 || code.p != 0 {
            return Err(line_error(line, format!("{} layers take a k1s1p0 code", kind.keyword())));
        }
    }
    let mut layer = LayerSpec::new(kind, code);
    let mut activation_seen = false;
    for &flag in &words[2..] {
        let activation = match flag {
            "sn" => {
                layer.spectral_norm = true;
                None
            }
            "instance" | "batch" if layer.norm != Norm::None => {
                return Err(line_error(line, "more than one normalization".into()));
            }
            "instance" => {
                layer.norm = Norm::Instance;
                None
            }
            "batch" => {
                layer.norm = Norm::Batch;
                None
            }
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "leaky_relu" => Some(Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)),
            other => match other.strip_prefix("leaky_relu=") {
                Some(v) => {
                    let slope: f64 = v
                        .parse()
                        .map_err(|_| line_error(line, format!("bad slope `{v}`")))?;
                    if !(slope > 0.0 && slope < 1.0) {
                        return Err(line_error(line, format!("slope {slope} outside (0, 1)")));
                    }
                    Some(Activation::LeakyRelu(slope))
                }
                None => return Err(line_error(line, format!("unknown flag `{other}`"))),
            },
        };
        if let Some(a) = activation {
            if activation_seen {
                return Err(line_error(line, "more than one activation".into()));
            }
            activation_seen = true;
            layer.activation = a;
        }
    }
    Ok(layer)
}

impl NetworkSpec {
    /// Parses the text format; line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut role = None;
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let words: Vec<&str> = content.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            if words[0] == "role" {
                if role.is_some() || words.len() != 2 {
                    return Err(line_error(line, "expected a single `role <name>` line".into()));
                }
                role = Some(words[1].parse::<Role>()?);
                continue;
            }
            layers.push(parse_layer(line, &words)?);
        }
        let role = role.ok_or_else(|| Error::Parse {
            field: "role".into(),
            message: "missing `role` line".into(),
        })?;
        if layers.is_empty() {
            return Err(Error::Parse {
                field: "layers".into(),
                message: "specification has no layers".into(),
            });
        }
        Ok(Self { role, layers })
    }

    pub fn count_spectral(&self) -> usize {
        self.layers.iter().filter(|l| l.spectral_norm).count()
    }

    pub fn count_norm(&self) -> usize {
        self.layers.iter().filter(|l| l.norm != Norm::None).count()
    }
}

impl core::fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "role {}", self.role.name())?;
        for l in &self.layers {
            write!(f, "{} {}", l.kind.keyword(), l.code)?;
            if l.spectral_norm {
                f.write_str(" sn")?;
            }
            match l.norm {
                Norm::None => {}
                Norm::Instance => f.write_str(" instance")?,
                Norm::Batch => f.write_str(" batch")?,
            }
            match l.activation {
                Activation::Linear => {}
                Activation::Relu => f.write_str(" relu")?,
                Activation::Tanh => f.write_str(" tanh")?,
                Activation::LeakyRelu(s) if s == DEFAULT_LEAKY_SLOPE => f.write_str(" leaky_relu")?,
                Activation::LeakyRelu(s) => write!(f, " leaky_relu={s}")?,
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
