//! Caption pretraining, weight transfer into the local branch, and retrieval fine-tuning.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datastore::{CaptionRecord, FeatureStore, TrainingTuple};
use crate::error::{Result, ScrcError};
use crate::geometry::{SpatialFeature, SPATIAL_DIM};
use crate::model::{ScoreRequest, ScrcConfig, ScrcModel, ScrcParams, VisualInput};
use crate::nncore::{Rng, Scalar, Sgd, SgdConfig};
use crate::textproc::Vocabulary;

pub const DEFAULT_PRETRAIN_LR: f64 = 0.01;
pub const DEFAULT_FINETUNE_LR: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Steps per entry of [`TrainReport::interval_losses`].
    pub log_interval: usize,
}

impl TrainConfig {
    pub fn for_phase(phase: Phase) -> Self {
        TrainConfig {
            lr: match phase {
                Phase::Pretrain => DEFAULT_PRETRAIN_LR,
                Phase::Finetune => DEFAULT_FINETUNE_LR,
            },
            momentum: 0.9,
            clip_norm: 10.0,
            steps: 1000,
            batch_size: 16,
            seed: 0,
            log_interval: 100,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.log_interval == 0 {
            return Err(ScrcError::Config(
                "steps, batch_size and log_interval must be at least 1".into(),
            ));
        }
        Sgd::<f32>::new(self.sgd()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phase: Phase,
    pub steps: usize,
    pub batch_size: usize,
    pub examples: usize,
    /// Loss of the very first batch, before any update.
    pub initial_loss: f64,
    /// Mean batch loss over the last logging interval.
    pub final_loss: f64,
    pub log_interval: usize,
    /// Mean batch loss of each consecutive `log_interval`-step window (last may be partial).
    pub interval_losses: Vec<f64>,
    pub wall_time_secs: f64,
}

/// Shuffles `0..n` with a permutation determined by `(seed, epoch)` and cuts it into batches.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    Rng::with_stream(seed, epoch).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Mean of `−log p` over a batch, accumulating gradients scaled by `1 / batch.len()`.
pub fn batch_loss_and_grad<F: Scalar>(model: &mut ScrcModel<F>, batch: &[&ScoreRequest<F>]) -> Result<f64> {
    let scale = F::one() / F::from_f64(batch.len() as f64);
    let mut total = 0.0;
    for req in batch {
        total += model.loss_and_backward(req, scale)?;
    }
    Ok(total / batch.len() as f64)
}

fn run_sgd<F: Scalar>(
    model: &mut ScrcModel<F>,
    examples: &[ScoreRequest<F>],
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(ScrcError::Input("no training examples".into()));
    }
    let start = Instant::now();
    let mut sgd = Sgd::new(cfg.sgd())?;
    model.params.zero_grads();

    let mut epoch = 0u64;
    let mut batches = make_batches(examples.len(), cfg.batch_size, cfg.seed, epoch);
    let mut next_batch = 0;
    let mut initial_loss = f64::NAN;
    let mut interval_losses = Vec::new();
    let mut window = (0.0, 0usize);

    for step in 0..cfg.steps {
        if next_batch == batches.len() {
            epoch += 1;
            batches = make_batches(examples.len(), cfg.batch_size, cfg.seed, epoch);
            next_batch = 0;
        }
        let batch: Vec<&ScoreRequest<F>> = batches[next_batch].iter().map(|&i| &examples[i]).collect();
        next_batch += 1;

        let loss = batch_loss_and_grad(model, &batch)?;
        if step == 0 {
            initial_loss = loss;
        }
        let config = model.config;
        sgd.step(model.params.trainable_mut(&config))?;

        window.0 += loss;
        window.1 += 1;
        if window.1 == cfg.log_interval || step + 1 == cfg.steps {
            interval_losses.push(window.0 / window.1 as f64);
            window = (0.0, 0);
        }
    }

    Ok(TrainReport {
        phase,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        examples: examples.len(),
        initial_loss,
        final_loss: *interval_losses.last().expect("at least one step"),
        log_interval: cfg.log_interval,
        interval_losses,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn to_f<F: Scalar>(v: &[f32]) -> Vec<F> {
    v.iter().map(|&x| F::from_f32(x)).collect()
}

/// The spatial descriptor of a box covering the whole image.
pub fn full_image_spatial() -> SpatialFeature {
    SpatialFeature([-1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0])
}

/// One `(image, caption)` pair per caption, scored from the image feature alone.
pub fn caption_examples<F: Scalar>(
    captions: &[CaptionRecord],
    vocab: &Vocabulary,
    context_store: &FeatureStore,
) -> Result<Vec<ScoreRequest<F>>> {
    let mut out = Vec::new();
    for record in captions {
        let context = to_f::<F>(context_store.require("context", &record.image_id)?);
        for caption in &record.captions {
            let query = vocab.encode(caption);
            if query.is_empty() {
                return Err(ScrcError::Input(format!(
                    "caption {caption:?} of `{}` has no tokens",
                    record.image_id
                )));
            }
            out.push(ScoreRequest {
                query,
                visual: VisualInput {
                    x_box: context.clone(),
                    x_context: context.clone(),
                    x_spatial: full_image_spatial(),
                },
            });
        }
    }
    Ok(out)
}

pub fn tuple_examples<F: Scalar>(
    tuples: &[TrainingTuple],
    region_store: &FeatureStore,
    context_store: &FeatureStore,
) -> Result<Vec<ScoreRequest<F>>> {
    tuples
        .iter()
        .map(|t| {
            Ok(ScoreRequest {
                query: t.tokens.clone(),
                visual: VisualInput {
                    x_box: to_f(region_store.require("region", &t.region_key)?),
                    x_context: to_f(context_store.require("context", &t.image_id)?),
                    x_spatial: t.spatial,
                },
            })
        })
        .collect()
}

/// Maximizes `log p(caption | image)` with the local branch switched off.
pub fn pretrain_captioning<F: Scalar>(
    model: &mut ScrcModel<F>,
    captions: &[CaptionRecord],
    vocab: &Vocabulary,
    context_store: &FeatureStore,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if !model.config.caption_mode {
        return Err(ScrcError::Config("pretraining requires a caption-mode model".into()));
    }
    let examples = caption_examples(captions, vocab, context_store)?;
    run_sgd(model, &examples, cfg, Phase::Pretrain)
}

/// Minimizes `−Σ log p(S | box, image, spatial)` over all training tuples.
pub fn finetune_retrieval<F: Scalar>(
    model: &mut ScrcModel<F>,
    tuples: &[TrainingTuple],
    region_store: &FeatureStore,
    context_store: &FeatureStore,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if model.config.caption_mode {
        return Err(ScrcError::Config(
            "fine-tuning requires the local branch; transfer the caption model first".into(),
        ));
    }
    if tuples.is_empty() {
        return Err(ScrcError::Input("no training tuples".into()));
    }
    let examples = tuple_examples(tuples, region_store, context_store)?;
    run_sgd(model, &examples, cfg, Phase::Finetune)
}

/// Initializes the local branch from the global one: LSTM weights and biases are copied,
/// `x_box` columns take the `x_context` weights, spatial columns are zeroed, and
/// `W_local := W_global`. The global branch is not modified.
pub fn transfer_weights<F: Scalar>(params: &mut ScrcParams<F>, config: &ScrcConfig) -> Result<()> {
    params.validate(config)?;
    let global_in = params.lstm_global.input_dim();
    if params.lstm_local.input_dim() != global_in + SPATIAL_DIM {
        return Err(ScrcError::Config(format!(
            "local branch input {} is not global input {global_in} plus {SPATIAL_DIM} spatial columns",
            params.lstm_local.input_dim()
        )));
    }
    let global = params.lstm_global.clone();
    for (dst, src) in params.lstm_local.gates_mut().into_iter().zip(global.gates()) {
        dst.recurrent_weights.value.copy_from(&src.recurrent_weights.value)?;
        dst.bias.value.copy_from(&src.bias.value)?;
        let w = &mut dst.input_weights.value;
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let v = if c < global_in {
                    src.input_weights.value.get(r, c)
                } else {
                    F::zero()
                };
                w.set(r, c, v);
            }
        }
    }
    params.w_local.value.copy_from(&params.w_global.value)?;
    for (name, t) in params.named_tensors_mut() {
        if name.starts_with("lstm_local") || name == "w_local" {
            t.zero_grad();
        }
    }
    Ok(())
}
