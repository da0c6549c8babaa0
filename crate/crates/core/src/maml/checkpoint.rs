//! JSON checkpoints of meta-trained parameters.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which is
//! enough to recover each `f64` bit-for-bit on load.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MamlConfig;
use crate::episodes::{EpisodeConfig, NormStats};
use crate::nn::{Activation, MlpArchitecture, MlpParameters};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

/// Settings a checkpoint was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEcho {
    pub episode: EpisodeConfig,
    pub maml: MamlConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub parameters: MlpParameters,
    pub norm_stats: Option<NormStats>,
    pub config: TrainingEcho,
    pub iterations_completed: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn architecture(&self) -> &MlpArchitecture {
        self.parameters.architecture()
    }
}

#[derive(Serialize, Deserialize)]
struct ArchDoc {
    input_dim: usize,
    hidden: Vec<usize>,
    n_way: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u64,
    arch: ArchDoc,
    /// One row-major `(out, in)` matrix per layer, flattened.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    norm_stats: Option<NormStats>,
    config: TrainingEcho,
    iterations_completed: usize,
    seed: u64,
}

/// Writes floats as `d.dddddddddddddddde±x`.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

pub fn checkpoint_to_json(ckpt: &Checkpoint) -> String {
    let arch = ckpt.architecture();
    let doc = CheckpointDoc {
        format_version: CHECKPOINT_FORMAT_VERSION,
        arch: ArchDoc {
            input_dim: arch.input_dim(),
            hidden: arch.hidden_widths().to_vec(),
            n_way: arch.output_dim(),
            activation: arch.activation(),
        },
        weights: ckpt.parameters.layers().map(|l| l.weights.to_vec()).collect(),
        biases: ckpt.parameters.layers().map(|l| l.bias.to_vec()).collect(),
        norm_stats: ckpt.norm_stats.clone(),
        config: ckpt.config.clone(),
        iterations_completed: ckpt.iterations_completed,
        seed: ckpt.seed,
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    doc.serialize(&mut ser).expect("checkpoint serializes");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse("checkpoint has no integer format_version".into()))?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let doc: CheckpointDoc =
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;

    let arch = MlpArchitecture::new(doc.arch.input_dim, doc.arch.hidden, doc.arch.n_way, doc.arch.activation)
        .map_err(|e| Error::Validation(format!("checkpoint architecture: {e}")))?;
    if doc.weights.len() != doc.biases.len() {
        return Err(Error::Validation(format!(
            "checkpoint has {} weight matrices but {} bias vectors",
            doc.weights.len(),
            doc.biases.len()
        )));
    }
    let layers = doc.weights.into_iter().zip(doc.biases).collect();
    let parameters = MlpParameters::from_layers(&arch, layers)
        .map_err(|e| Error::Validation(format!("checkpoint weights do not fit the architecture: {e}")))?;
    if let Some(stats) = &doc.norm_stats {
        if stats.mean.len() != arch.input_dim() || stats.std.len() != arch.input_dim() {
            return Err(Error::Validation(format!(
                "norm_stats width does not match input_dim {}",
                arch.input_dim()
            )));
        }
    }
    Ok(Checkpoint {
        parameters,
        norm_stats: doc.norm_stats,
        config: doc.config,
        iterations_completed: doc.iterations_completed,
        seed: doc.seed,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_json(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
