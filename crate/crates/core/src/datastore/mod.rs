//! Feature stores, annotation files, and checkpoints.

mod binio;
mod checkpoint;
mod features;
mod records;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use features::{load_feature_store, save_feature_store, FeatureStore, FEATURE_MAGIC, FEATURE_VERSION};
pub use records::{
    build_training_tuples, load_annotations, load_captions, load_proposals, parse_annotations, save_jsonl,
    AnnotationRecord, CaptionRecord, ProposalSet, TrainingTuple, DEFAULT_MAX_PROPOSALS,
};
