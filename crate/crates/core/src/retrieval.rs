//! Scoring candidate boxes for a query and assembling per-query ranked results.

use indexmap::IndexMap;
use serde::Serialize;

use crate::datastore::{AnnotationRecord, FeatureStore, ProposalSet};
use crate::error::{Result, ScrcError};
use crate::evalmetrics::RankedResult;
use crate::geometry::{encode_spatial, BoundingBox, ImageSize};
use crate::model::{ScrcModel, VisualInput};
use crate::nncore::Scalar;
use crate::textproc::{TokenSequence, Vocabulary};

pub fn visual_input<F: Scalar>(
    region_store: &FeatureStore,
    context_store: &FeatureStore,
    region_key: &str,
    image_id: &str,
    bbox: &BoundingBox,
    size: ImageSize,
) -> Result<VisualInput<F>> {
    let cast = |v: &[f32]| v.iter().map(|&x| F::from_f32(x)).collect();
    Ok(VisualInput {
        x_box: cast(region_store.require("region", region_key)?),
        x_context: cast(context_store.require("context", image_id)?),
        x_spatial: encode_spatial(bbox, size)?,
    })
}

pub fn encode_query(vocab: &Vocabulary, text: &str) -> Result<TokenSequence> {
    let q = vocab.encode(text);
    if q.is_empty() {
        return Err(ScrcError::Input(format!("query {text:?} has no tokens")));
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieved {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub region_key: String,
    pub log_prob: f64,
}

/// Ranks `(box, region key)` candidates of one image, best first, ties by candidate order.
pub fn retrieve<F: Scalar>(
    model: &ScrcModel<F>,
    query: &TokenSequence,
    image_id: &str,
    size: ImageSize,
    candidates: &[(BoundingBox, String)],
    region_store: &FeatureStore,
    context_store: &FeatureStore,
) -> Result<Vec<Retrieved>> {
    let visuals = candidates
        .iter()
        .map(|(b, k)| visual_input(region_store, context_store, k, image_id, b, size))
        .collect::<Result<Vec<_>>>()?;
    let scores = model.score_candidates(query, &visuals)?;
    Ok(crate::evalmetrics::rank_candidates(&scores)?
        .into_iter()
        .map(|i| Retrieved {
            bbox: candidates[i].0,
            region_key: candidates[i].1.clone(),
            log_prob: scores[i],
        })
        .collect())
}

fn group_by_image(records: &[AnnotationRecord]) -> IndexMap<&str, Vec<&AnnotationRecord>> {
    let mut groups: IndexMap<&str, Vec<&AnnotationRecord>> = IndexMap::new();
    for r in records {
        groups.entry(r.image_id.as_str()).or_default().push(r);
    }
    groups
}

/// Every description is a query whose candidates are all annotated boxes of its image.
pub fn rank_annotated<F: Scalar>(
    model: &ScrcModel<F>,
    vocab: &Vocabulary,
    records: &[AnnotationRecord],
    region_store: &FeatureStore,
    context_store: &FeatureStore,
) -> Result<Vec<RankedResult>> {
    let mut out = Vec::new();
    for (image_id, group) in group_by_image(records) {
        let visuals = group
            .iter()
            .map(|r| {
                visual_input(
                    region_store,
                    context_store,
                    &r.region_key,
                    image_id,
                    &r.bbox,
                    r.image_size()?,
                )
            })
            .collect::<Result<Vec<VisualInput<F>>>>()?;
        let boxes: Vec<BoundingBox> = group.iter().map(|r| r.bbox).collect();
        for (gt, record) in group.iter().enumerate() {
            for description in &record.descriptions {
                let query = encode_query(vocab, description)?;
                let scores = model.score_candidates(&query, &visuals)?;
                out.push(RankedResult::new(
                    description.as_str(),
                    image_id,
                    &boxes,
                    &scores,
                    record.bbox,
                    Some(gt),
                )?);
            }
        }
    }
    Ok(out)
}

/// Every description is a query whose candidates are the proposals of its image.
pub fn rank_proposals<F: Scalar>(
    model: &ScrcModel<F>,
    vocab: &Vocabulary,
    records: &[AnnotationRecord],
    proposals: &[ProposalSet],
    region_store: &FeatureStore,
    context_store: &FeatureStore,
) -> Result<Vec<RankedResult>> {
    let by_image: IndexMap<&str, &ProposalSet> = proposals.iter().map(|p| (p.image_id.as_str(), p)).collect();
    let mut out = Vec::new();
    for (image_id, group) in group_by_image(records) {
        let set = by_image.get(image_id).ok_or_else(|| ScrcError::MissingKey {
            kind: "proposal image",
            key: image_id.to_string(),
        })?;
        if set.boxes.is_empty() {
            return Err(ScrcError::Input(format!("image `{image_id}` has no proposals")));
        }
        let size = group[0].image_size()?;
        let visuals = set
            .boxes
            .iter()
            .zip(&set.region_keys)
            .map(|(b, k)| visual_input(region_store, context_store, k, image_id, b, size))
            .collect::<Result<Vec<VisualInput<F>>>>()?;
        for record in &group {
            for description in &record.descriptions {
                let query = encode_query(vocab, description)?;
                let scores = model.score_candidates(&query, &visuals)?;
                out.push(RankedResult::new(
                    description.as_str(),
                    image_id,
                    &set.boxes,
                    &scores,
                    record.bbox,
                    None,
                )?);
            }
        }
    }
    Ok(out)
}
