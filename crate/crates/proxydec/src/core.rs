//! Shared token, vocabulary, and numeric-kernel foundations.
//!
//! All logits are held and combined in f64; backends producing lower
//! precision widen at the boundary so the combination algebra is
//! bit-reproducible regardless of which scheduler drove the calls.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type TokenId = u32;

/// Ordered token-id sequence. Ids are validated against a vocabulary at the
/// session boundary, not here.
pub type TokenSeq = Vec<TokenId>;

/// The shared support of every per-step distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub size: usize,
    /// Token ids that terminate generation. A set rather than a single id:
    /// chat-style stop tokens differ across model families.
    pub eos_ids: BTreeSet<TokenId>,
    pub name: String,
}

impl Vocabulary {
    pub fn new(size: usize, eos_ids: impl IntoIterator<Item = TokenId>, name: &str) -> Result<Self> {
        let eos_ids: BTreeSet<TokenId> = eos_ids.into_iter().collect();
        if size < 2 {
            return Err(Error::Config(format!("vocabulary size must be >= 2, got {size}")));
        }
        if let Some(&bad) = eos_ids.iter().find(|&&id| id as usize >= size) {
            return Err(Error::Config(format!("eos id {bad} out of range for vocab size {size}")));
        }
        Ok(Self { size, eos_ids, name: name.to_string() })
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.size
    }

    pub fn is_eos(&self, id: TokenId) -> bool {
        self.eos_ids.contains(&id)
    }

    /// Checks every id is in range; names the first offender.
    pub fn validate_ids(&self, ids: &[TokenId]) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&id| !self.contains(id)) {
            return Err(Error::VocabMismatch(format!(
                "token id {bad} out of range for vocabulary '{}' (size {})",
                self.name, self.size
            )));
        }
        Ok(())
    }
}

/// Dense next-token scores over a shared vocabulary. Finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLogits(format!("non-finite logit entry {bad}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the maximum entry, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

/// A normalized distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.values[id as usize]
    }
}

/// Numerically stable softmax: subtracts the max before exponentiating, so
/// the result is invariant to adding any constant to all entries.
pub fn stable_softmax(z: &LogitVector) -> ProbVector {
    let max = z.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.values.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbVector { values: exps.iter().map(|&e| e / total).collect() }
}

/// Outcome of the three-way vocabulary compatibility check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompatReport {
    Compatible,
    Incompatible(Vec<String>),
}

impl CompatReport {
    pub fn is_compatible(&self) -> bool {
        matches!(self, CompatReport::Compatible)
    }
}

/// All three backends must share one vocabulary: equal sizes and equal EOS
/// sets. The report names each mismatching field against `a`.
pub fn validate_vocab_compat(a: &Vocabulary, b: &Vocabulary, c: &Vocabulary) -> CompatReport {
    let mut problems = Vec::new();
    for (label, v) in [("b", b), ("c", c)] {
        if v.size != a.size {
            problems.push(format!("size mismatch {label} ({} vs {})", v.size, a.size));
        }
        if v.eos_ids != a.eos_ids {
            problems.push(format!("eos mismatch {label}"));
        }
    }
    if problems.is_empty() {
        CompatReport::Compatible
    } else {
        CompatReport::Incompatible(problems)
    }
}
