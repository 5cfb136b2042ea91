use std::path::Path;

use indexmap::IndexMap;

use crate::datastore::binio::{put_f32s, put_u16, put_u32, ByteReader};
use crate::error::{Result, ScrcError};

pub const FEATURE_MAGIC: &[u8; 8] = b"SCRCFEAT";
pub const FEATURE_VERSION: u32 = 1;

/// Precomputed feature vectors keyed by region or image id. Keeps insertion order so that
/// saving a loaded store reproduces the file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            entries: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let key = key.into();
        if values.len() != self.dim {
            return Err(ScrcError::shape("FeatureStore::insert", self.dim, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ScrcError::Input(format!("feature `{key}` has non-finite values")));
        }
        if key.len() > u16::MAX as usize {
            return Err(ScrcError::Input(format!(
                "feature key of {} bytes is too long",
                key.len()
            )));
        }
        if self.entries.contains_key(&key) {
            return Err(ScrcError::Input(format!("duplicate feature key `{key}`")));
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Like [`get`](Self::get) but reports the missing key.
    pub fn require(&self, kind: &'static str, key: &str) -> Result<&[f32]> {
        self.get(key).ok_or_else(|| ScrcError::MissingKey {
            kind,
            key: key.to_owned(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(FEATURE_MAGIC);
        put_u32(&mut out, FEATURE_VERSION);
        put_u32(&mut out, self.dim as u32);
        put_u32(&mut out, self.entries.len() as u32);
        for (key, values) in &self.entries {
            put_u16(&mut out, key.len() as u16);
            out.extend_from_slice(key.as_bytes());
            put_f32s(&mut out, values);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8, "magic")? != FEATURE_MAGIC {
            return Err(ScrcError::Format {
                offset: 0,
                message: "bad magic, not a feature store".into(),
            });
        }
        let version = r.u32("version")?;
        if version != FEATURE_VERSION {
            return Err(ScrcError::UnsupportedVersion {
                found: version,
                expected: FEATURE_VERSION,
            });
        }
        let dim = r.u32("dim")? as usize;
        let count = r.u32("count")? as usize;
        let mut store = FeatureStore::new(dim);
        for i in 0..count {
            let record_start = r.offset();
            let key_len = r.u16("key length")? as usize;
            let key = r.utf8(key_len, "key")?.to_owned();
            let values = r.f32s(dim, "feature values")?;
            if store.entries.contains_key(&key) {
                return Err(ScrcError::Format {
                    offset: record_start,
                    message: format!("duplicate key `{key}` in record {i}"),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ScrcError::Format {
                    offset: record_start,
                    message: format!("non-finite value for key `{key}`"),
                });
            }
            store.entries.insert(key, values);
        }
        r.expect_end()?;
        Ok(store)
    }
}

pub fn save_feature_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, store.to_bytes()).map_err(|e| ScrcError::io(path, e))
}

pub fn load_feature_store(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ScrcError::io(path, e))?;
    FeatureStore::from_bytes(&bytes)
}
