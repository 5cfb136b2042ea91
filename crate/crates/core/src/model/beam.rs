//! Beam-search description generation.
//!
//! Hypotheses are ranked by total log-probability including the `<eos>` term, with no
//! length normalization. Ties go to the lexicographically smaller token sequence.
//! `<bos>` and `<unk>` are never emitted.

use std::cmp::Ordering;

use crate::error::{Result, ScrcError};
use crate::model::network::{DecoderState, ScrcModel, VisualInput};
use crate::nncore::{log_softmax, Scalar};
use crate::textproc::{TokenId, TokenSequence, BOS_ID, EOS_ID, UNK_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tokens: TokenSequence,
    pub log_prob: f64,
}

struct Hypothesis<F> {
    tokens: Vec<TokenId>,
    log_prob: f64,
    state: DecoderState<F>,
}

struct Expansion {
    parent: usize,
    token: TokenId,
    tokens: Vec<TokenId>,
    log_prob: f64,
}

fn rank(a_lp: f64, a_tokens: &[TokenId], b_lp: f64, b_tokens: &[TokenId]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_tokens.cmp(b_tokens))
}

/// Tokens a hypothesis may emit besides `<eos>`.
pub fn emittable_tokens(vocab_size: usize) -> impl Iterator<Item = TokenId> {
    (0..vocab_size as TokenId).filter(|&t| t != BOS_ID && t != EOS_ID && t != UNK_ID)
}

impl<F: Scalar> ScrcModel<F> {
    /// Most probable description of at most `max_len` tokens for one box.
    pub fn generate_description(
        &self,
        visual: &VisualInput<F>,
        beam_width: usize,
        max_len: usize,
    ) -> Result<Generated> {
        if beam_width == 0 || max_len == 0 {
            return Err(ScrcError::Input("beam width and max length must be at least 1".into()));
        }
        let vocab = self.config.vocab_size;
        let mut live = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            state: self.initial_state(),
        }];
        let mut best: Option<Generated> = None;

        while !live.is_empty() {
            let mut expansions = Vec::new();
            let mut next_states = Vec::with_capacity(live.len());
            for (parent, hyp) in live.iter().enumerate() {
                let last = hyp.tokens.last().copied().unwrap_or(BOS_ID);
                let out = self.step_logits(last, visual, &hyp.state)?;
                let log_probs = log_softmax(&out.logits)?;
                next_states.push(out.state);
                let push = |expansions: &mut Vec<Expansion>, token: TokenId| {
                    let mut tokens = hyp.tokens.clone();
                    if token != EOS_ID {
                        tokens.push(token);
                    }
                    expansions.push(Expansion {
                        parent,
                        token,
                        tokens,
                        log_prob: hyp.log_prob + log_probs[token as usize].as_f64(),
                    });
                };
                push(&mut expansions, EOS_ID);
                if hyp.tokens.len() < max_len {
                    for token in emittable_tokens(vocab) {
                        push(&mut expansions, token);
                    }
                }
            }
            expansions.sort_by(|a, b| rank(a.log_prob, &a.tokens, b.log_prob, &b.tokens));
            expansions.truncate(beam_width);

            let mut next_live = Vec::new();
            for e in expansions {
                if e.token == EOS_ID {
                    let better = match &best {
                        None => true,
                        Some(b) => rank(e.log_prob, &e.tokens, b.log_prob, &b.tokens.ids) == Ordering::Less,
                    };
                    if better {
                        best = Some(Generated {
                            tokens: TokenSequence::new(e.tokens),
                            log_prob: e.log_prob,
                        });
                    }
                } else {
                    next_live.push(Hypothesis {
                        tokens: e.tokens,
                        log_prob: e.log_prob,
                        state: next_states[e.parent].clone(),
                    });
                }
            }
            // Extending a hypothesis only lowers its score, so an open hypothesis can still win
            // only if it already beats the best finished one.
            if let Some(b) = &best {
                next_live.retain(|h| rank(h.log_prob, &h.tokens, b.log_prob, &b.tokens.ids) == Ordering::Less);
            }
            live = next_live;
        }
        best.ok_or_else(|| ScrcError::Contract("beam search finished without a hypothesis".into()))
    }
}
