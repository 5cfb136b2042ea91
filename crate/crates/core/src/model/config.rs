use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrcError};
use crate::geometry::SPATIAL_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrcConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Dimension of both the region (`x_box`) and whole-image (`x_context`) features.
    pub feat_dim: usize,
    /// Local branch disabled: the model scores `p(S | image)` only.
    #[serde(default)]
    pub caption_mode: bool,
    /// Feed zeros in place of the spatial descriptor.
    #[serde(default)]
    pub mask_spatial: bool,
    /// Drop the global branch from word prediction.
    #[serde(default)]
    pub mask_context: bool,
}

impl ScrcConfig {
    pub fn new(vocab_size: usize, embed_dim: usize, hidden_dim: usize, feat_dim: usize) -> Self {
        ScrcConfig {
            vocab_size,
            embed_dim,
            hidden_dim,
            feat_dim,
            caption_mode: false,
            mask_spatial: false,
            mask_context: false,
        }
    }

    pub fn caption(self) -> Self {
        ScrcConfig {
            caption_mode: true,
            ..self
        }
    }

    pub fn with_masks(self, mask_spatial: bool, mask_context: bool) -> Self {
        ScrcConfig {
            mask_spatial,
            mask_context,
            ..self
        }
    }

    pub fn local_input_dim(&self) -> usize {
        self.hidden_dim + self.feat_dim + SPATIAL_DIM
    }

    pub fn global_input_dim(&self) -> usize {
        self.hidden_dim + self.feat_dim
    }

    pub fn uses_local(&self) -> bool {
        !self.caption_mode
    }

    pub fn uses_global(&self) -> bool {
        !self.mask_context
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("feat_dim", self.feat_dim),
        ] {
            if v == 0 {
                return Err(ScrcError::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 3 {
            return Err(ScrcError::Config("vocab_size must cover the 3 reserved tokens".into()));
        }
        if self.caption_mode && self.mask_context {
            return Err(ScrcError::Config(
                "caption mode with the context branch masked leaves no visual input".into(),
            ));
        }
        Ok(())
    }
}
