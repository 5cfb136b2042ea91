//! Retrieval metrics: top-1 precision over annotated boxes, and recall@k / oracle recall
//! over proposal boxes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrcError};
use crate::geometry::{iou, is_hit, BoundingBox};

/// Stable descending order of `scores`; equal scores keep their input order.
pub fn rank_candidates(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ScrcError::Candidate {
            index,
            source: Box::new(ScrcError::Input(format!("non-finite score {}", scores[index]))),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBox {
    /// Position in the original candidate list.
    pub index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query: String,
    pub image_id: String,
    /// Best first.
    pub ranked: Vec<RankedBox>,
    pub gt_box: BoundingBox,
    /// Candidate index of the annotated ground-truth record, when candidates are annotations.
    pub gt_index: Option<usize>,
}

impl RankedResult {
    pub fn new(
        query: impl Into<String>,
        image_id: impl Into<String>,
        boxes: &[BoundingBox],
        scores: &[f64],
        gt_box: BoundingBox,
        gt_index: Option<usize>,
    ) -> Result<Self> {
        if boxes.len() != scores.len() {
            return Err(ScrcError::Input(format!(
                "{} boxes but {} scores",
                boxes.len(),
                scores.len()
            )));
        }
        let ranked = rank_candidates(scores)?
            .into_iter()
            .map(|i| RankedBox {
                index: i,
                bbox: boxes[i],
                score: scores[i],
            })
            .collect();
        Ok(RankedResult {
            query: query.into(),
            image_id: image_id.into(),
            ranked,
            gt_box,
            gt_index,
        })
    }

    fn hit_within(&self, k: usize) -> bool {
        self.ranked.iter().take(k).any(|c| is_hit(&c.bbox, &self.gt_box))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    GtBoxes,
    Proposals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub query_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_at_10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
}

fn fraction(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// P@1 when candidates are the image's annotated boxes: the top-ranked candidate must be
/// the ground-truth record itself.
pub fn eval_gt_scenario(results: &[RankedResult]) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(ScrcError::Input("no queries to evaluate".into()));
    }
    let mut correct = 0;
    for (q, r) in results.iter().enumerate() {
        let gt = r
            .gt_index
            .filter(|&g| r.ranked.iter().any(|c| c.index == g))
            .ok_or_else(|| {
                ScrcError::Input(format!(
                    "query {q} ({:?}): ground-truth box is not among the candidates",
                    r.query
                ))
            })?;
        if r.ranked[0].index == gt {
            correct += 1;
        }
    }
    Ok(MetricsReport {
        scenario: Scenario::GtBoxes,
        query_count: results.len(),
        p_at_1: Some(fraction(correct, results.len())),
        r_at_1: None,
        r_at_10: None,
        oracle: None,
    })
}

/// Fraction of queries with an IoU ≥ 0.5 hit among the top `k` candidates.
pub fn recall_at_k(results: &[RankedResult], k: usize) -> f64 {
    fraction(results.iter().filter(|r| r.hit_within(k)).count(), results.len())
}

pub fn eval_proposal_scenario(results: &[RankedResult]) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(ScrcError::Input("no queries to evaluate".into()));
    }
    if let Some(q) = results.iter().position(|r| r.ranked.is_empty()) {
        return Err(ScrcError::Input(format!("query {q} has no candidate boxes")));
    }
    Ok(MetricsReport {
        scenario: Scenario::Proposals,
        query_count: results.len(),
        p_at_1: None,
        r_at_1: Some(recall_at_k(results, 1)),
        r_at_10: Some(recall_at_k(results, 10)),
        oracle: Some(recall_at_k(results, usize::MAX)),
    })
}

/// Per-query CSV: query, image_id, rank-1 IoU, hit@1, hit@10, oracle hit.
pub fn write_per_query_csv<W: Write>(results: &[RankedResult], out: W) -> Result<()> {
    let to_err = |e: csv::Error| ScrcError::Input(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query", "image_id", "rank1_iou", "hit_at_1", "hit_at_10", "oracle_hit"])
        .map_err(to_err)?;
    for r in results {
        let top_iou = r.ranked.first().map_or(0.0, |c| iou(&c.bbox, &r.gt_box));
        w.write_record([
            r.query.clone(),
            r.image_id.clone(),
            format!("{top_iou:.6}"),
            r.hit_within(1).to_string(),
            r.hit_within(10).to_string(),
            r.hit_within(usize::MAX).to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| ScrcError::Input(format!("csv: {e}")))
}
