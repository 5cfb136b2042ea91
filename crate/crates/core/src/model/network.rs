use crate::error::{Result, ScrcError};
use crate::geometry::{SpatialFeature, SPATIAL_DIM};
use crate::model::{ScrcConfig, ScrcParams};
use crate::nncore::{log_softmax, LstmState, Rng, Scalar, StepCache};
use crate::textproc::{TokenId, TokenSequence, BOS_ID, EOS_ID};

/// Visual evidence for one candidate box.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualInput<F> {
    pub x_box: Vec<F>,
    pub x_context: Vec<F>,
    pub x_spatial: SpatialFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest<F> {
    pub query: TokenSequence,
    pub visual: VisualInput<F>,
}

/// Recurrent state of the three LSTMs; inactive branches hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<F> {
    pub language: LstmState<F>,
    pub local: Option<LstmState<F>>,
    pub global: Option<LstmState<F>>,
}

/// Everything one timestep needs for backpropagation.
#[derive(Debug, Clone)]
pub struct StepTrace<F> {
    pub input: TokenId,
    pub target: TokenId,
    pub language: StepCache<F>,
    pub local: Option<StepCache<F>>,
    pub global: Option<StepCache<F>>,
    pub h_local: Option<Vec<F>>,
    pub h_global: Option<Vec<F>>,
    pub log_probs: Vec<F>,
}

/// Per-timestep caches for a full sequence: `T + 1` steps for a `T`-token query.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub steps: Vec<StepTrace<F>>,
    pub log_prob: f64,
}

/// Output of a single decoder step.
#[derive(Debug, Clone)]
pub struct StepOutput<F> {
    pub logits: Vec<F>,
    pub state: DecoderState<F>,
    pub language: StepCache<F>,
    pub local: Option<StepCache<F>>,
    pub global: Option<StepCache<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScrcModel<F> {
    pub config: ScrcConfig,
    pub params: ScrcParams<F>,
}

impl<F: Scalar> ScrcModel<F> {
    pub fn new(config: ScrcConfig, params: ScrcParams<F>) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        Ok(ScrcModel { config, params })
    }

    pub fn random(config: ScrcConfig, rng: &mut Rng, radius: f64) -> Result<Self> {
        config.validate()?;
        let params = ScrcParams::random(&config, rng, radius);
        Ok(ScrcModel { config, params })
    }

    pub fn initial_state(&self) -> DecoderState<F> {
        let h = self.config.hidden_dim;
        DecoderState {
            language: LstmState::zeros(h),
            local: self.config.uses_local().then(|| LstmState::zeros(h)),
            global: self.config.uses_global().then(|| LstmState::zeros(h)),
        }
    }

    fn check_visual(&self, visual: &VisualInput<F>) -> Result<()> {
        let d = self.config.feat_dim;
        if self.config.uses_local() && visual.x_box.len() != d {
            return Err(ScrcError::shape("x_box", d, visual.x_box.len()));
        }
        if self.config.uses_global() && visual.x_context.len() != d {
            return Err(ScrcError::shape("x_context", d, visual.x_context.len()));
        }
        Ok(())
    }

    /// Embeds `token`, advances all active LSTMs, and returns the pre-softmax word scores
    /// `W_local h_local + W_global h_global + r`.
    pub fn step_logits(
        &self,
        token: TokenId,
        visual: &VisualInput<F>,
        state: &DecoderState<F>,
    ) -> Result<StepOutput<F>> {
        if token as usize >= self.config.vocab_size {
            return Err(ScrcError::Input(format!(
                "token id {token} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        self.check_visual(visual)?;
        let p = &self.params;
        let embedded = p.embedding.value.column(token as usize);
        let (language, lang_cache) = p.lstm_language.step(&embedded, &state.language)?;
        let mut logits = p.bias.value.data().to_vec();

        let mut local_cache = None;
        let mut local_state = None;
        if self.config.uses_local() {
            let prev = state
                .local
                .as_ref()
                .ok_or_else(|| ScrcError::Contract("decoder state lacks the local branch".into()))?;
            let mut x = Vec::with_capacity(self.config.local_input_dim());
            x.extend_from_slice(&language.h);
            x.extend_from_slice(&visual.x_box);
            if self.config.mask_spatial {
                x.extend(std::iter::repeat_n(F::zero(), SPATIAL_DIM));
            } else {
                x.extend(visual.x_spatial.0.iter().map(|&v| F::from_f64(v)));
            }
            let (s, cache) = p.lstm_local.step(&x, prev)?;
            p.w_local.value.matvec_acc(&s.h, &mut logits)?;
            local_cache = Some(cache);
            local_state = Some(s);
        }

        let mut global_cache = None;
        let mut global_state = None;
        if self.config.uses_global() {
            let prev = state
                .global
                .as_ref()
                .ok_or_else(|| ScrcError::Contract("decoder state lacks the global branch".into()))?;
            let mut x = Vec::with_capacity(self.config.global_input_dim());
            x.extend_from_slice(&language.h);
            x.extend_from_slice(&visual.x_context);
            let (s, cache) = p.lstm_global.step(&x, prev)?;
            p.w_global.value.matvec_acc(&s.h, &mut logits)?;
            global_cache = Some(cache);
            global_state = Some(s);
        }

        Ok(StepOutput {
            logits,
            state: DecoderState {
                language,
                local: local_state,
                global: global_state,
            },
            language: lang_cache,
            local: local_cache,
            global: global_cache,
        })
    }

    /// Runs `<bos> w_1 … w_T` and scores targets `w_1 … w_T <eos>`.
    pub fn forward(&self, query: &TokenSequence, visual: &VisualInput<F>) -> Result<ForwardTrace<F>> {
        if query.is_empty() {
            return Err(ScrcError::Input("query has no tokens".into()));
        }
        let inputs = std::iter::once(BOS_ID).chain(query.ids.iter().copied());
        let targets = query.ids.iter().copied().chain(std::iter::once(EOS_ID));
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(query.len() + 1);
        let mut total = 0.0f64;
        for (input, target) in inputs.zip(targets) {
            if target as usize >= self.config.vocab_size {
                return Err(ScrcError::Input(format!(
                    "token id {target} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            let out = self.step_logits(input, visual, &state)?;
            let log_probs = log_softmax(&out.logits)?;
            total += log_probs[target as usize].as_f64();
            steps.push(StepTrace {
                input,
                target,
                h_local: out.state.local.as_ref().map(|s| s.h.clone()),
                h_global: out.state.global.as_ref().map(|s| s.h.clone()),
                language: out.language,
                local: out.local,
                global: out.global,
                log_probs,
            });
            state = out.state;
        }
        Ok(ForwardTrace { steps, log_prob: total })
    }

    /// `log p(query, <eos> | box, image, spatial)`.
    pub fn sequence_log_prob(&self, request: &ScoreRequest<F>) -> Result<f64> {
        Ok(self.forward(&request.query, &request.visual)?.log_prob)
    }

    /// Scores one query against each candidate independently; output order follows input.
    pub fn score_candidates(&self, query: &TokenSequence, candidates: &[VisualInput<F>]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(ScrcError::Input("no candidates to score".into()));
        }
        candidates
            .iter()
            .enumerate()
            .map(|(index, visual)| {
                self.forward(query, visual)
                    .map(|t| t.log_prob)
                    .map_err(|e| ScrcError::Candidate {
                        index,
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    /// Accumulates `scale · ∂(−log p)/∂θ` into the parameter gradients.
    pub fn backward(&mut self, trace: &ForwardTrace<F>, scale: F) -> Result<()> {
        let cfg = self.config;
        let h = cfg.hidden_dim;
        let p = &mut self.params;
        let zeros = || vec![F::zero(); h];
        let (mut dh_lang, mut dc_lang) = (zeros(), zeros());
        let (mut dh_local, mut dc_local) = (zeros(), zeros());
        let (mut dh_global, mut dc_global) = (zeros(), zeros());

        for step in trace.steps.iter().rev() {
            if step.log_probs.len() != cfg.vocab_size
                || step.local.is_some() != cfg.uses_local()
                || step.global.is_some() != cfg.uses_global()
            {
                return Err(ScrcError::Contract(
                    "forward trace does not match model configuration".into(),
                ));
            }
            let mut dlogits: Vec<F> = step.log_probs.iter().map(|&lp| lp.exp() * scale).collect();
            dlogits[step.target as usize] = dlogits[step.target as usize] - scale;

            for (g, &d) in p.bias.grad.data_mut().iter_mut().zip(&dlogits) {
                *g = *g + d;
            }

            let mut dh_lang_step = dh_lang.clone();

            if let (Some(cache), Some(h_local)) = (&step.local, &step.h_local) {
                p.w_local.grad.add_outer(&dlogits, h_local, F::one())?;
                p.w_local.value.matvec_t_acc(&dlogits, &mut dh_local)?;
                let g = p.lstm_local.step_backward(cache, &dh_local, &dc_local)?;
                add_into(&mut dh_lang_step, &g.dx[..h]);
                dh_local = g.dh_prev;
                dc_local = g.dc_prev;
            }

            if let (Some(cache), Some(h_global)) = (&step.global, &step.h_global) {
                p.w_global.grad.add_outer(&dlogits, h_global, F::one())?;
                p.w_global.value.matvec_t_acc(&dlogits, &mut dh_global)?;
                let g = p.lstm_global.step_backward(cache, &dh_global, &dc_global)?;
                add_into(&mut dh_lang_step, &g.dx[..h]);
                dh_global = g.dh_prev;
                dc_global = g.dc_prev;
            }

            let g = p.lstm_language.step_backward(&step.language, &dh_lang_step, &dc_lang)?;
            let col = step.input as usize;
            for (r, &d) in g.dx.iter().enumerate() {
                let cur = p.embedding.grad.get(r, col);
                p.embedding.grad.set(r, col, cur + d);
            }
            dh_lang = g.dh_prev;
            dc_lang = g.dc_prev;
        }
        Ok(())
    }

    /// `−log p` of one sequence with its gradient accumulated at `scale`.
    pub fn loss_and_backward(&mut self, request: &ScoreRequest<F>, scale: F) -> Result<f64> {
        let trace = self.forward(&request.query, &request.visual)?;
        self.backward(&trace, scale)?;
        Ok(-trace.log_prob)
    }
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
