//! "NRFI" checkpoint container.
//!
//! Layout: magic `NRFI`, format version (u32 LE), manifest length (u32 LE),
//! UTF-8 JSON manifest, then every tensor's data as f32 LE in manifest
//! order. Field tensors are stored as `field.<name>`, optimizer moments as
//! `adam.m.<name>` and `adam.v.<name>`; anything else is carried verbatim.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::optim::{Adam, AdamConfig};
use crate::field::{FieldConfig, RadianceField, Tensor};

pub const MAGIC: [u8; 4] = *b"NRFI";
pub const FORMAT_VERSION: u32 = 1;

const FIELD_PREFIX: &str = "field.";
const ADAM_PREFIX: &str = "adam.";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerEntry {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    field: FieldConfig,
    optimizer: Option<OptimizerEntry>,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Field parameters plus optional optimizer state, job metadata and extra tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub field: RadianceField<f32>,
    pub optimizer: Option<Adam<f32>>,
    pub meta: serde_json::Value,
    pub extra: Vec<Tensor<f32>>,
}

impl Checkpoint {
    pub fn new(field: RadianceField<f32>) -> Self {
        Self { field, optimizer: None, meta: serde_json::Value::Null, extra: Vec::new() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &[usize], &[f32])> = Vec::new();
        for t in self.field.params() {
            tensors.push((format!("{FIELD_PREFIX}{}", t.name), &t.shape, &t.data));
        }
        let moments = self.optimizer.as_ref().map(|a| a.tensors(&self.field)).unwrap_or_default();
        for t in &moments {
            tensors.push((t.name.clone(), &t.shape, &t.data));
        }
        for t in &self.extra {
            if t.name.starts_with(FIELD_PREFIX) || t.name.starts_with(ADAM_PREFIX) {
                return Err(Error::invalid(format!("reserved tensor name {}", t.name)));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::invalid(format!("tensor {} data does not match its shape", t.name)));
            }
            tensors.push((t.name.clone(), &t.shape, &t.data));
        }
        let manifest = Manifest {
            field: self.field.config().clone(),
            optimizer: self.optimizer.as_ref().map(|a| OptimizerEntry { config: a.config, step: a.step }),
            meta: self.meta.clone(),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorEntry { name: name.clone(), shape: shape.to_vec() })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::invalid("manifest too large"))?;
        let payload: usize = tensors.iter().map(|t| t.2.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in data.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::IncompatibleCheckpoint("missing NRFI magic bytes".into()));
        }
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::CorruptCheckpoint("truncated header".into()))
        };
        let version = word(4)?;
        if version != FORMAT_VERSION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "file version {version}, supported version {FORMAT_VERSION}"
            )));
        }
        let len = word(8)? as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::CorruptCheckpoint("truncated manifest".into()))?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::CorruptCheckpoint(format!("manifest: {e}")))?;

        let mut cursor = 12 + len;
        let mut field_tensors = Vec::new();
        let mut moments = Vec::new();
        let mut extra = Vec::new();
        for entry in manifest.tensors {
            let count = entry
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor {} shape overflows", entry.name)))?;
            let end = count
                .checked_mul(4)
                .and_then(|n| n.checked_add(cursor))
                .filter(|&end| end <= bytes.len())
                .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated data for tensor {}", entry.name)))?;
            let data = bytes[cursor..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            cursor = end;
            if let Some(name) = entry.name.strip_prefix(FIELD_PREFIX) {
                field_tensors.push(Tensor { name: name.to_string(), shape: entry.shape, data });
            } else if entry.name.starts_with(ADAM_PREFIX) {
                moments.push(Tensor { name: entry.name, shape: entry.shape, data });
            } else {
                extra.push(Tensor { name: entry.name, shape: entry.shape, data });
            }
        }
        if cursor != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - cursor)));
        }
        let corrupt = |e: Error| Error::CorruptCheckpoint(e.to_string());
        let field = RadianceField::from_tensors(manifest.field, field_tensors).map_err(corrupt)?;
        let optimizer = match manifest.optimizer {
            Some(o) => Some(Adam::from_tensors(o.config, o.step, &field, moments).map_err(corrupt)?),
            None if moments.is_empty() => None,
            None => return Err(Error::CorruptCheckpoint("optimizer tensors without optimizer entry".into())),
        };
        Ok(Self { field, optimizer, meta: manifest.meta, extra })
    }

    /// Writes via a temporary sibling file and a rename, so readers never see a partial file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("nrfi.tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn extra_tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.extra.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = FieldConfig { levels: 2, base_resolution: 2, hidden_width: 4, log2_table_size: 6, ..FieldConfig::default() };
        let field = RadianceField::new(cfg, 9).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &field);
        adam.step = 17;
        adam.m[0][3] = 0.25;
        Checkpoint {
            optimizer: Some(adam),
            meta: serde_json::json!({"step": 17, "phase": "training"}),
            extra: vec![Tensor { name: "dataset.0".into(), shape: vec![1, 2, 3], data: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5] }],
            field,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let a = sample().to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&a).unwrap();
        assert_eq!(loaded, sample());
        assert_eq!(loaded.to_bytes().unwrap(), a);
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [6, 11, 40, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_bump_names_both_versions() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let msg = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(msg.contains("incompatible") && msg.contains('2') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn wrong_magic_is_incompatible() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::IncompatibleCheckpoint(_))));
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"NRFI");
        assert_eq!(bytes[4..8], [1, 0, 0, 0]);
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let manifest: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
        assert_eq!(manifest["tensors"][0]["name"], "field.grid.0");
    }
}
