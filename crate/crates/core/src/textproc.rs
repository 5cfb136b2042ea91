//! Tokenization and vocabulary.

use std::collections::HashMap;

use crate::error::{Result, ScrcError};

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
const RESERVED: [&str; 3] = [UNK, BOS, EOS];

/// Lowercases, replaces ASCII punctuation with spaces, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Content token ids of one query or description; `<bos>`/`<eos>` are added by the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Reserved tokens first, then tokens seen at least `min_count` times ordered by
    /// descending frequency and then lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(ScrcError::Config("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(tok, n)| *n >= min_count && !RESERVED.contains(&tok.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t));
        Self::from_tokens(tokens.collect())
    }

    /// Rebuilds a vocabulary from its ordered token list (e.g. a checkpoint header).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(ScrcError::Input(format!(
                "vocabulary must start with {UNK}, {BOS}, {EOS}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(ScrcError::Input(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Out-of-vocabulary tokens map to `<unk>`.
    pub fn encode(&self, text: &str) -> TokenSequence {
        TokenSequence::new(
            tokenize(text)
                .iter()
                .map(|t| self.lookup(t).unwrap_or(UNK_ID))
                .collect(),
        )
    }

    pub fn decode(&self, seq: &TokenSequence) -> Vec<String> {
        seq.ids
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK).to_owned())
            .collect()
    }

    pub fn decode_text(&self, seq: &TokenSequence) -> String {
        self.decode(seq).join(" ")
    }
}
