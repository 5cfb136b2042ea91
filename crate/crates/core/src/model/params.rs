use crate::error::{Result, ScrcError};
use crate::model::ScrcConfig;
use crate::nncore::{init_uniform, LstmParams, ParamTensor, Rng, Scalar};

/// Default half-width of the uniform weight initialization.
pub const INIT_RADIUS: f64 = 0.08;

/// All learnable weights of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrcParams<F> {
    /// embed_dim × vocab_size; column `w` embeds token `w`.
    pub embedding: ParamTensor<F>,
    pub lstm_language: LstmParams<F>,
    /// Input `[h_language, x_box, x_spatial]`.
    pub lstm_local: LstmParams<F>,
    /// Input `[h_language, x_context]`.
    pub lstm_global: LstmParams<F>,
    /// vocab_size × hidden_dim
    pub w_local: ParamTensor<F>,
    /// vocab_size × hidden_dim
    pub w_global: ParamTensor<F>,
    /// vocab_size × 1
    pub bias: ParamTensor<F>,
}

impl<F: Scalar> ScrcParams<F> {
    pub fn zeros(cfg: &ScrcConfig) -> Self {
        ScrcParams {
            embedding: ParamTensor::zeros(cfg.embed_dim, cfg.vocab_size),
            lstm_language: LstmParams::zeros(cfg.hidden_dim, cfg.embed_dim),
            lstm_local: LstmParams::zeros(cfg.hidden_dim, cfg.local_input_dim()),
            lstm_global: LstmParams::zeros(cfg.hidden_dim, cfg.global_input_dim()),
            w_local: ParamTensor::zeros(cfg.vocab_size, cfg.hidden_dim),
            w_global: ParamTensor::zeros(cfg.vocab_size, cfg.hidden_dim),
            bias: ParamTensor::zeros(cfg.vocab_size, 1),
        }
    }

    /// Uniform(−radius, radius) weights and zero biases, drawn in a fixed tensor order.
    pub fn random(cfg: &ScrcConfig, rng: &mut Rng, radius: f64) -> Self {
        let h = cfg.hidden_dim;
        ScrcParams {
            embedding: ParamTensor::new(init_uniform(rng, cfg.embed_dim, cfg.vocab_size, radius)),
            lstm_language: LstmParams::random(rng, h, cfg.embed_dim, radius),
            lstm_local: LstmParams::random(rng, h, cfg.local_input_dim(), radius),
            lstm_global: LstmParams::random(rng, h, cfg.global_input_dim(), radius),
            w_local: ParamTensor::new(init_uniform(rng, cfg.vocab_size, h, radius)),
            w_global: ParamTensor::new(init_uniform(rng, cfg.vocab_size, h, radius)),
            bias: ParamTensor::zeros(cfg.vocab_size, 1),
        }
    }

    /// Every tensor with its checkpoint name, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &ParamTensor<F>)> {
        let mut out = vec![("embedding".to_owned(), &self.embedding)];
        out.extend(self.lstm_language.named_tensors("lstm_language"));
        out.extend(self.lstm_local.named_tensors("lstm_local"));
        out.extend(self.lstm_global.named_tensors("lstm_global"));
        out.push(("w_local".to_owned(), &self.w_local));
        out.push(("w_global".to_owned(), &self.w_global));
        out.push(("bias".to_owned(), &self.bias));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut ParamTensor<F>)> {
        let mut out = vec![("embedding".to_owned(), &mut self.embedding)];
        out.extend(self.lstm_language.named_tensors_mut("lstm_language"));
        out.extend(self.lstm_local.named_tensors_mut("lstm_local"));
        out.extend(self.lstm_global.named_tensors_mut("lstm_global"));
        out.push(("w_local".to_owned(), &mut self.w_local));
        out.push(("w_global".to_owned(), &mut self.w_global));
        out.push(("bias".to_owned(), &mut self.bias));
        out
    }

    /// Tensors that receive gradient under `cfg`: caption mode freezes the local branch,
    /// a masked context freezes the global branch.
    pub fn trainable_mut(&mut self, cfg: &ScrcConfig) -> Vec<(String, &mut ParamTensor<F>)> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|(name, _)| {
                let local = name.starts_with("lstm_local") || name == "w_local";
                let global = name.starts_with("lstm_global") || name == "w_global";
                !(local && !cfg.uses_local()) && !(global && !cfg.uses_global())
            })
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.value.data().len()).sum()
    }

    pub fn validate(&self, cfg: &ScrcConfig) -> Result<()> {
        let expect = |name: &str, t: &ParamTensor<F>, shape: (usize, usize)| {
            if t.value.shape() != shape || t.grad.shape() != shape {
                Err(ScrcError::shape(
                    "ScrcParams::validate",
                    format!("{name} {shape:?}"),
                    format!("{:?}", t.value.shape()),
                ))
            } else {
                Ok(())
            }
        };
        expect("embedding", &self.embedding, (cfg.embed_dim, cfg.vocab_size))?;
        expect("w_local", &self.w_local, (cfg.vocab_size, cfg.hidden_dim))?;
        expect("w_global", &self.w_global, (cfg.vocab_size, cfg.hidden_dim))?;
        expect("bias", &self.bias, (cfg.vocab_size, 1))?;
        for (name, lstm, input) in [
            ("lstm_language", &self.lstm_language, cfg.embed_dim),
            ("lstm_local", &self.lstm_local, cfg.local_input_dim()),
            ("lstm_global", &self.lstm_global, cfg.global_input_dim()),
        ] {
            lstm.validate()?;
            if lstm.hidden() != cfg.hidden_dim || lstm.input_dim() != input {
                return Err(ScrcError::shape(
                    "ScrcParams::validate",
                    format!("{name} hidden {}, input {input}", cfg.hidden_dim),
                    format!("hidden {}, input {}", lstm.hidden(), lstm.input_dim()),
                ));
            }
        }
        Ok(())
    }

    pub fn cast<G: Scalar>(&self) -> ScrcParams<G> {
        ScrcParams {
            embedding: self.embedding.cast(),
            lstm_language: self.lstm_language.cast(),
            lstm_local: self.lstm_local.cast(),
            lstm_global: self.lstm_global.cast(),
            w_local: self.w_local.cast(),
            w_global: self.w_global.cast(),
            bias: self.bias.cast(),
        }
    }
}
