//! JSON-lines annotation, proposal, and caption files, and training-tuple construction.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datastore::FeatureStore;
use crate::error::{Result, ScrcError};
use crate::geometry::{encode_spatial, BoundingBox, ImageSize, SpatialFeature};
use crate::textproc::{TokenSequence, Vocabulary};

pub const DEFAULT_MAX_PROPOSALS: usize = 100;

/// One annotated object with all of its descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub region_key: String,
    pub descriptions: Vec<String>,
}

impl AnnotationRecord {
    pub fn image_size(&self) -> Result<ImageSize> {
        ImageSize::new(self.width, self.height)
    }

    fn validate(&self) -> Result<()> {
        let img = self.image_size()?;
        if !self.bbox.fits_in(img) {
            return Err(ScrcError::Input(format!(
                "box {:?} exceeds image {}x{}",
                self.bbox.to_array(),
                self.width,
                self.height
            )));
        }
        if self.descriptions.is_empty() {
            return Err(ScrcError::Input("record has no descriptions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub image_id: String,
    pub boxes: Vec<BoundingBox>,
    pub region_keys: Vec<String>,
    /// Image size, needed for spatial features; callers may supply it separately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

impl ProposalSet {
    pub fn image_size(&self) -> Option<Result<ImageSize>> {
        match (self.width, self.height) {
            (Some(w), Some(h)) => Some(ImageSize::new(w, h)),
            _ => None,
        }
    }

    fn validate(&self, max: usize) -> Result<()> {
        if self.boxes.len() != self.region_keys.len() {
            return Err(ScrcError::Input(format!(
                "{} boxes but {} region keys",
                self.boxes.len(),
                self.region_keys.len()
            )));
        }
        if self.boxes.len() > max {
            return Err(ScrcError::Input(format!(
                "{} proposals exceed the limit of {max}",
                self.boxes.len()
            )));
        }
        if let Some(size) = self.image_size() {
            let size = size?;
            if let Some(b) = self.boxes.iter().find(|b| !b.fits_in(size)) {
                return Err(ScrcError::Input(format!(
                    "box {:?} exceeds image {}x{}",
                    b.to_array(),
                    size.width,
                    size.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub captions: Vec<String>,
}

impl CaptionRecord {
    fn validate(&self) -> Result<()> {
        if self.captions.is_empty() {
            return Err(ScrcError::Input("record has no captions".into()));
        }
        Ok(())
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, validate: impl Fn(&T) -> Result<()>) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| ScrcError::io(path, e))?;
    parse_jsonl(&text, validate)
}

fn parse_jsonl<T: DeserializeOwned>(text: &str, validate: impl Fn(&T) -> Result<()>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| ScrcError::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        validate(&record).map_err(|e| ScrcError::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>> {
    parse_jsonl(text, AnnotationRecord::validate)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    read_jsonl(path.as_ref(), AnnotationRecord::validate)
}

pub fn load_proposals(path: impl AsRef<Path>, max: usize) -> Result<Vec<ProposalSet>> {
    read_jsonl(path.as_ref(), |p: &ProposalSet| p.validate(max))
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    read_jsonl(path.as_ref(), CaptionRecord::validate)
}

/// Writes one JSON object per line.
pub fn save_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| ScrcError::Input(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| ScrcError::io(path, e))?;
    f.write_all(&buf).map_err(|e| ScrcError::io(path, e))
}

/// One (image, box, description) training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTuple {
    pub region_key: String,
    pub image_id: String,
    pub spatial: SpatialFeature,
    pub tokens: TokenSequence,
}

/// Expands every annotated object into one tuple per description.
pub fn build_training_tuples(
    records: &[AnnotationRecord],
    vocab: &Vocabulary,
    region_store: &FeatureStore,
    context_store: &FeatureStore,
) -> Result<Vec<TrainingTuple>> {
    let mut tuples = Vec::new();
    for record in records {
        region_store.require("region", &record.region_key)?;
        context_store.require("context", &record.image_id)?;
        let spatial = encode_spatial(&record.bbox, record.image_size()?)?;
        for description in &record.descriptions {
            let tokens = vocab.encode(description);
            if tokens.is_empty() {
                return Err(ScrcError::Input(format!(
                    "description {description:?} of `{}` has no tokens",
                    record.region_key
                )));
            }
            tuples.push(TrainingTuple {
                region_key: record.region_key.clone(),
                image_id: record.image_id.clone(),
                spatial,
                tokens,
            });
        }
    }
    Ok(tuples)
}
