//! Versioned, checksummed generator checkpoints.
//!
//! Layout: one header line `ppm-checkpoint <version> sha256:<hex>` followed
//! by a JSON body. The digest covers the body bytes. Parameter tensors are
//! stored as base64 of their little-endian `f64` bytes, so values survive
//! bit for bit. Discriminator parameters are never written.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{ParamStore, Tensor};
use crate::eventlog::{TimeScaler, Vocabulary, EOS, SOS};
use crate::nn::{GeneratorModel, ModelError, Topology};
use crate::pipeline::TrainedModel;
use crate::train::{LossReport, TrainConfig};

pub const MAGIC: &str = "ppm-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch (file corrupt or truncated)")]
    Checksum,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations_run: usize,
    pub best_iteration: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

impl From<&LossReport> for TrainingSummary {
    fn from(r: &LossReport) -> Self {
        Self {
            iterations_run: r.iterations.len(),
            best_iteration: r.best_iteration,
            best_validation_loss: r.best_validation_loss,
            stopped_early: r.stopped_early,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredParam {
    name: String,
    group: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Body {
    version: u32,
    vocabulary: Vec<String>,
    max_duration_days: f64,
    topology: Topology,
    max_length: usize,
    seed: u64,
    config: TrainConfig,
    summary: TrainingSummary,
    params: Vec<StoredParam>,
}

/// Everything needed to decode with a trained generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: GeneratorModel,
    pub vocab: Vocabulary,
    pub scaler: TimeScaler,
    pub max_length: usize,
    pub config: TrainConfig,
    pub seed: u64,
    pub summary: TrainingSummary,
}

impl Checkpoint {
    pub fn from_trained(m: &TrainedModel) -> Self {
        Self {
            generator: m.generator.clone(),
            vocab: m.vocab.clone(),
            scaler: m.scaler,
            max_length: m.max_length,
            config: m.config.clone(),
            seed: m.config.seed,
            summary: TrainingSummary::from(&m.report),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self
            .generator
            .params
            .iter()
            .map(|(_, p)| StoredParam {
                name: p.name.clone(),
                group: p.group.clone(),
                shape: p.value.shape().to_vec(),
                data: B64.encode(p.value.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()),
            })
            .collect();
        let body = Body {
            version: FORMAT_VERSION,
            vocabulary: self.vocab.labels().to_vec(),
            max_duration_days: self.scaler.max_duration(),
            topology: self.generator.topology,
            max_length: self.max_length,
            seed: self.seed,
            config: self.config.clone(),
            summary: self.summary.clone(),
            params,
        };
        let json = serde_json::to_vec_pretty(&body).expect("checkpoint body serializes");
        let digest = hex(&Sha256::digest(&json));
        let mut out = format!("{MAGIC} {FORMAT_VERSION} sha256:{digest}\n").into_bytes();
        out.extend(json);
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CheckpointError::Format("missing header line".into()))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(CheckpointError::Format("not a checkpoint file".into()));
        }
        let found: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::Format("missing version".into()))?;
        if found != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let digest = parts
            .next()
            .and_then(|d| d.strip_prefix("sha256:"))
            .ok_or_else(|| CheckpointError::Format("missing checksum".into()))?;
        let mut body = &bytes[nl + 1..];
        if body.last() == Some(&b'\n') {
            body = &body[..body.len() - 1];
        }
        if hex(&Sha256::digest(body)) != digest {
            return Err(CheckpointError::Checksum);
        }
        let body: Body = serde_json::from_slice(body).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if body.version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: body.version,
                expected: FORMAT_VERSION,
            });
        }
        if body.vocabulary.len() < 2 || body.vocabulary[0] != SOS || body.vocabulary[1] != EOS {
            return Err(CheckpointError::Format(
                "vocabulary must start with the reserved tokens".into(),
            ));
        }
        if body.vocabulary.len() != body.topology.vocab_size {
            return Err(CheckpointError::Format(
                "vocabulary size disagrees with topology".into(),
            ));
        }
        let mut store = ParamStore::new();
        for p in body.params {
            let raw = B64
                .decode(p.data.as_bytes())
                .map_err(|e| CheckpointError::Format(format!("{}: {e}", p.name)))?;
            if raw.len() % 8 != 0 {
                return Err(CheckpointError::Format(format!("{}: ragged data", p.name)));
            }
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(p.shape, data).map_err(|e| CheckpointError::Format(format!("{}: {e}", p.name)))?;
            store.add(p.name, p.group, t);
        }
        let generator = GeneratorModel::from_params(body.topology, store)?;
        let scaler = TimeScaler::new(body.max_duration_days).map_err(|e| CheckpointError::Format(e.to_string()))?;
        Ok(Self {
            generator,
            vocab: Vocabulary::from_ordered(body.vocabulary),
            scaler,
            max_length: body.max_length.max(1),
            config: body.config,
            seed: body.seed,
            summary: body.summary,
        })
    }

    /// Writes atomically: a temporary file in the target directory is renamed
    /// into place only after a complete write.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CheckpointError::Io(e.error))?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
