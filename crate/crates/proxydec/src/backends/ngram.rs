//! Add-k smoothed n-gram backend trained from a token corpus.
//!
//! Emitted logits are `ln((count + k) / (total + k * |V|))`; `k > 0` keeps
//! every logit finite.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::backends::{BackendKind, ContextScorer};
use crate::core::{LogitVector, TokenId, TokenSeq, Vocabulary};
use crate::{Error, Result};

pub struct NGramModel {
    name: String,
    vocabulary: Vocabulary,
    order: usize,
    smoothing_k: f64,
    /// (order-1)-id context -> per-token counts.
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>>,
}

/// Raw occurrence counts over sliding windows of length `order`. Counts are
/// sums, so the model is independent of corpus sequence order.
pub fn train_ngram(
    corpus: &[TokenSeq],
    order: usize,
    smoothing_k: f64,
    vocabulary: Vocabulary,
) -> Result<NGramModel> {
    if order < 1 {
        return Err(Error::Config(format!("ngram order must be >= 1, got {order}")));
    }
    if !(smoothing_k > 0.0) || !smoothing_k.is_finite() {
        return Err(Error::Config(format!("smoothing_k must be positive, got {smoothing_k}")));
    }
    if corpus.is_empty() {
        return Err(Error::Config("ngram corpus is empty".into()));
    }
    let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
    for seq in corpus {
        vocabulary.validate_ids(seq)?;
        for window in seq.windows(order) {
            let (context, token) = window.split_at(order - 1);
            *counts.entry(context.to_vec()).or_default().entry(token[0]).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        log::warn!("ngram order {order} exceeds every corpus sequence; model is all-default");
    }
    Ok(NGramModel {
        name: vocabulary.name.clone(),
        vocabulary,
        order,
        smoothing_k,
        counts,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn counts(&self) -> &HashMap<Vec<TokenId>, HashMap<TokenId, u64>> {
        &self.counts
    }
}

impl ContextScorer for NGramModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Ngram
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn score(&self, context: &[TokenId]) -> LogitVector {
        let key_len = self.order - 1;
        let empty = HashMap::new();
        // contexts shorter than order-1 are unseen: smoothing only
        let per_token = if context.len() >= key_len {
            self.counts.get(&context[context.len() - key_len..]).unwrap_or(&empty)
        } else {
            &empty
        };
        let total: u64 = per_token.values().sum();
        let denom = total as f64 + self.smoothing_k * self.vocabulary.size as f64;
        let values = (0..self.vocabulary.size as TokenId)
            .map(|id| {
                let count = per_token.get(&id).copied().unwrap_or(0);
                ((count as f64 + self.smoothing_k) / denom).ln()
            })
            .collect();
        LogitVector::new(values).expect("add-k logits are finite for k > 0")
    }
}

/// Newline-delimited sequences of whitespace-separated token ids; lines
/// beginning with '#' are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TokenSeq>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read corpus '{}': {e}", path.display())))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<TokenSeq>> {
    let mut corpus = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let seq: TokenSeq = line
            .split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| Error::DatasetValidation {
                    line: lineno + 1,
                    message: format!("bad token id '{tok}' in corpus"),
                })
            })
            .collect::<Result<_>>()?;
        corpus.push(seq);
    }
    Ok(corpus)
}

/// Vocabulary for a corpus-trained model: explicit size if given, otherwise
/// max id + 1 (at least 2).
pub fn corpus_vocabulary(
    corpus: &[TokenSeq],
    size: Option<usize>,
    eos_ids: Vec<TokenId>,
    name: &str,
) -> Result<Vocabulary> {
    let max_id = corpus.iter().flatten().copied().max().unwrap_or(0);
    let size = size.unwrap_or((max_id as usize + 1).max(2));
    Vocabulary::new(size, eos_ids, name)
}
