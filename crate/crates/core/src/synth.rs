//! Synthetic referring-expression dataset.
//!
//! Each image holds four regions (left, right, top, bottom). Two colors appear per image,
//! each on two regions, and a region's feature is a one-hot block for its color only. A
//! query "<color> <position>" therefore identifies its region only through the box's
//! spatial descriptor.

use std::path::Path;

use crate::datastore::{save_feature_store, save_jsonl, AnnotationRecord, CaptionRecord, FeatureStore, ProposalSet};
use crate::error::{Result, ScrcError};
use crate::geometry::{iou, BoundingBox};
use crate::nncore::Rng;

pub const COLORS: [&str; 4] = ["red", "green", "blue", "yellow"];
pub const POSITIONS: [&str; 4] = ["left", "right", "top", "bottom"];
/// Feature entries per color block.
pub const BLOCK: usize = 2;
pub const FEAT_DIM: usize = COLORS.len() * BLOCK;

pub const REGION_FEATURES_FILE: &str = "region_features.bin";
pub const CONTEXT_FEATURES_FILE: &str = "context_features.bin";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const PROPOSALS_FILE: &str = "proposals.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub images: usize,
    pub proposals_per_image: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            images: 16,
            proposals_per_image: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub region_features: FeatureStore,
    pub context_features: FeatureStore,
    pub annotations: Vec<AnnotationRecord>,
    pub captions: Vec<CaptionRecord>,
    pub proposals: Vec<ProposalSet>,
}

fn color_feature(color: usize) -> Vec<f32> {
    let mut v = vec![0.0; FEAT_DIM];
    v[color * BLOCK..(color + 1) * BLOCK].fill(1.0);
    v
}

/// Box for `position` with a little jitter; fractions of the image size.
fn region_box(rng: &mut Rng, position: usize, w: f64, h: f64) -> BoundingBox {
    let j = |rng: &mut Rng| rng.uniform(-0.03, 0.03);
    let (x0, y0, x1, y1) = match position {
        0 => (0.05, 0.33, 0.32, 0.67),
        1 => (0.68, 0.33, 0.95, 0.67),
        2 => (0.35, 0.04, 0.65, 0.30),
        _ => (0.35, 0.70, 0.65, 0.96),
    };
    BoundingBox {
        x_min: (x0 + j(rng)) * w,
        y_min: (y0 + j(rng)) * h,
        x_max: (x1 + j(rng)) * w,
        y_max: (y1 + j(rng)) * h,
    }
}

fn random_box(rng: &mut Rng, w: f64, h: f64) -> BoundingBox {
    let bw = rng.uniform(0.1, 0.5) * w;
    let bh = rng.uniform(0.1, 0.5) * h;
    let x = rng.uniform(0.0, w - bw);
    let y = rng.uniform(0.0, h - bh);
    BoundingBox {
        x_min: x,
        y_min: y,
        x_max: x + bw,
        y_max: y + bh,
    }
}

fn jittered(rng: &mut Rng, b: &BoundingBox, w: f64, h: f64) -> BoundingBox {
    let dx = 0.04 * b.width();
    let dy = 0.04 * b.height();
    BoundingBox {
        x_min: (b.x_min + rng.uniform(-dx, dx)).max(0.0),
        y_min: (b.y_min + rng.uniform(-dy, dy)).max(0.0),
        x_max: (b.x_max + rng.uniform(-dx, dx)).min(w),
        y_max: (b.y_max + rng.uniform(-dy, dy)).min(h),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.images == 0 || cfg.proposals_per_image < POSITIONS.len() {
        return Err(ScrcError::Config(format!(
            "need at least one image and {} proposals per image",
            POSITIONS.len()
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut region_features = FeatureStore::new(FEAT_DIM);
    let mut context_features = FeatureStore::new(FEAT_DIM);
    let mut annotations = Vec::new();
    let mut captions = Vec::new();
    let mut proposals = Vec::new();

    for i in 0..cfg.images {
        let image_id = format!("img{i:03}");
        let width = 160.0 + 40.0 * rng.below(5) as f64;
        let height = 120.0 + 40.0 * rng.below(4) as f64;

        let first = rng.below(COLORS.len());
        let second = (first + 1 + rng.below(COLORS.len() - 1)) % COLORS.len();
        let mut layout = [first, first, second, second];
        rng.shuffle(&mut layout);

        let mut context: Vec<f32> = (0..FEAT_DIM).map(|_| rng.uniform(-0.1, 0.1) as f32).collect();
        for c in [first, second] {
            for v in &mut context[c * BLOCK..(c + 1) * BLOCK] {
                *v += 0.5;
            }
        }
        context_features.insert(image_id.clone(), context)?;

        let mut regions = Vec::new();
        for (position, &color) in layout.iter().enumerate() {
            let bbox = region_box(&mut rng, position, width, height);
            let region_key = format!("{image_id}_r{position}");
            region_features.insert(region_key.clone(), color_feature(color))?;
            annotations.push(AnnotationRecord {
                image_id: image_id.clone(),
                width,
                height,
                bbox,
                region_key,
                descriptions: vec![format!("{} {}", COLORS[color], POSITIONS[position])],
            });
            regions.push((bbox, color));
        }

        captions.push(CaptionRecord {
            image_id: image_id.clone(),
            captions: vec![
                format!("{} and {}", COLORS[first], COLORS[second]),
                format!("{} and {}", COLORS[second], COLORS[first]),
            ],
        });

        let mut boxes: Vec<BoundingBox> = regions
            .iter()
            .map(|(b, _)| jittered(&mut rng, b, width, height))
            .collect();
        while boxes.len() < cfg.proposals_per_image {
            boxes.push(random_box(&mut rng, width, height));
        }
        rng.shuffle(&mut boxes);
        let mut region_keys = Vec::with_capacity(boxes.len());
        for (p, b) in boxes.iter().enumerate() {
            let key = format!("{image_id}_p{p:02}");
            let (best_iou, color) =
                regions
                    .iter()
                    .map(|(r, c)| (iou(b, r), *c))
                    .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
            let feature = if best_iou >= 0.3 {
                color_feature(color)
            } else {
                vec![0.0; FEAT_DIM]
            };
            region_features.insert(key.clone(), feature)?;
            region_keys.push(key);
        }
        proposals.push(ProposalSet {
            image_id,
            boxes,
            region_keys,
            width: Some(width),
            height: Some(height),
        });
    }

    Ok(SynthDataset {
        region_features,
        context_features,
        annotations,
        captions,
        proposals,
    })
}

impl SynthDataset {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| ScrcError::io(dir, e))?;
        save_feature_store(&self.region_features, dir.join(REGION_FEATURES_FILE))?;
        save_feature_store(&self.context_features, dir.join(CONTEXT_FEATURES_FILE))?;
        save_jsonl(&self.annotations, dir.join(ANNOTATIONS_FILE))?;
        save_jsonl(&self.captions, dir.join(CAPTIONS_FILE))?;
        save_jsonl(&self.proposals, dir.join(PROPOSALS_FILE))?;
        Ok(())
    }
}
