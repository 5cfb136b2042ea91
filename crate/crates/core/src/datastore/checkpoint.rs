//! Model checkpoints: JSON header (config + vocabulary) followed by named f32 tensors.
//!
//! ```text
//! "SCRCCKPT" | u32 version | u32 header_len | header JSON | u32 tensor_count
//! per tensor: u16 name_len | name | u8 rank | rank × u32 dims | f32 data
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datastore::binio::{put_f32s, put_u16, put_u32, ByteReader};
use crate::error::{Result, ScrcError};
use crate::model::{ScrcConfig, ScrcModel, ScrcParams};
use crate::nncore::{Matrix, Scalar};
use crate::textproc::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SCRCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ScrcConfig,
    vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ScrcModel<f32>,
    pub vocabulary: Vocabulary,
}

impl Checkpoint {
    pub fn new<F: Scalar>(model: &ScrcModel<F>, vocabulary: &Vocabulary) -> Result<Self> {
        if vocabulary.len() != model.config.vocab_size {
            return Err(ScrcError::Config(format!(
                "vocabulary has {} tokens but the model expects {}",
                vocabulary.len(),
                model.config.vocab_size
            )));
        }
        Ok(Checkpoint {
            model: ScrcModel::new(model.config, model.params.cast())?,
            vocabulary: vocabulary.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            config: self.model.config,
            vocabulary: self.vocabulary.tokens().to_vec(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let tensors = self.model.params.named_tensors();

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, header_json.len() as u32);
        out.extend_from_slice(&header_json);
        put_u32(&mut out, tensors.len() as u32);
        for (name, t) in tensors {
            put_u16(&mut out, name.len() as u16);
            out.extend_from_slice(name.as_bytes());
            out.push(2);
            put_u32(&mut out, t.value.rows() as u32);
            put_u32(&mut out, t.value.cols() as u32);
            put_f32s(&mut out, t.value.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(ScrcError::Format {
                offset: 0,
                message: "bad magic, not a checkpoint".into(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(ScrcError::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let header_start = r.offset();
        let header_text = r.utf8(header_len, "header")?;
        let header: Header = serde_json::from_str(header_text).map_err(|e| ScrcError::Format {
            offset: header_start,
            message: format!("invalid header: {e}"),
        })?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(ScrcError::UnsupportedVersion {
                found: header.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let config = header.config;
        config.validate()?;
        let vocabulary = Vocabulary::from_tokens(header.vocabulary)?;
        if vocabulary.len() != config.vocab_size {
            return Err(ScrcError::Format {
                offset: header_start,
                message: format!(
                    "header vocabulary has {} tokens, config says {}",
                    vocabulary.len(),
                    config.vocab_size
                ),
            });
        }

        let mut params = ScrcParams::<f32>::zeros(&config);
        let expected_count = params.named_tensors().len();
        let count_offset = r.offset();
        let count = r.u32("tensor count")? as usize;
        if count != expected_count {
            return Err(ScrcError::Format {
                offset: count_offset,
                message: format!("tensor count {count}, expected {expected_count}"),
            });
        }

        let mut seen = HashSet::new();
        for _ in 0..count {
            let start = r.offset();
            let name_len = r.u16("tensor name length")? as usize;
            let name = r.utf8(name_len, "tensor name")?.to_owned();
            let rank = r.u8("tensor rank")? as usize;
            let dims = (0..rank)
                .map(|_| r.u32("tensor dim").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if !seen.insert(name.clone()) {
                return Err(ScrcError::Format {
                    offset: start,
                    message: format!("duplicate tensor `{name}`"),
                });
            }
            let mut slots = params.named_tensors_mut();
            let Some((_, slot)) = slots.iter_mut().find(|(n, _)| *n == name) else {
                return Err(ScrcError::Format {
                    offset: start,
                    message: format!("unexpected tensor `{name}`"),
                });
            };
            let (rows, cols) = slot.value.shape();
            let shape_ok = match dims.as_slice() {
                [r0, c0] => (*r0, *c0) == (rows, cols),
                [n] => cols == 1 && *n == rows,
                _ => false,
            };
            if !shape_ok {
                return Err(ScrcError::Format {
                    offset: start,
                    message: format!("tensor `{name}` has dims {dims:?}, expected [{rows}, {cols}]"),
                });
            }
            let data = r.f32s(rows * cols, "tensor data")?;
            slot.value = Matrix::from_vec(rows, cols, data)?;
        }
        r.expect_end()?;
        Ok(Checkpoint {
            model: ScrcModel::new(config, params)?,
            vocabulary,
        })
    }
}

pub fn save_checkpoint<F: Scalar>(model: &ScrcModel<F>, vocabulary: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = Checkpoint::new(model, vocabulary)?.to_bytes();
    std::fs::write(path, bytes).map_err(|e| ScrcError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ScrcError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
