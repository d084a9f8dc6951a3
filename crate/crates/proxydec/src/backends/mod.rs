//! Pluggable token-conditioned logit producers.
//!
//! Three kinds: an exact lookup table (test oracle), an add-k smoothed
//! n-gram trained from a token corpus, and a remote HTTP client speaking the
//! wire protocol of [`crate::server`]. Every backend scores the *cumulative*
//! context, so call-splitting invariance holds by construction; incremental
//! caching is an internal concern.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core::{LogitVector, TokenId, Vocabulary};
use crate::{Error, Result};

pub mod ngram;
pub mod remote;
pub mod table;
pub mod wire;

pub use ngram::{train_ngram, NGramModel};
pub use remote::RemoteBackend;
pub use table::TableModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Table,
    Ngram,
    Remote,
}

#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub vocabulary: Vocabulary,
}

/// A logit producer. Thread-safe so one backend can serve many sessions.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// Opens a session whose context starts as `prompt`. The conditioning
    /// payload stands in for non-text inputs and is forwarded uninterpreted.
    fn open_session(&self, prompt: &[TokenId], conditioning: &[u8]) -> Result<Box<dyn Session>>;
}

/// A monotonically extending token context. Single-owner: no concurrent
/// calls on one session; distinct sessions may run concurrently.
pub trait Session: Send {
    fn backend_name(&self) -> &str;

    fn context(&self) -> &[TokenId];

    /// Appends `new_tokens` (possibly empty) and returns next-token logits
    /// for the extended context.
    fn extend_and_score(&mut self, new_tokens: &[TokenId]) -> Result<LogitVector>;
}

/// Scoring by cumulative context; backs the table and n-gram sessions.
pub trait ContextScorer: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> BackendKind;
    fn vocabulary(&self) -> &Vocabulary;
    fn score(&self, context: &[TokenId]) -> LogitVector;
}

pub struct LocalSession {
    scorer: Arc<dyn ContextScorer>,
    context: Vec<TokenId>,
}

impl LocalSession {
    pub fn open(scorer: Arc<dyn ContextScorer>, prompt: &[TokenId]) -> Result<Self> {
        scorer.vocabulary().validate_ids(prompt)?;
        Ok(Self { scorer, context: prompt.to_vec() })
    }
}

impl Session for LocalSession {
    fn backend_name(&self) -> &str {
        self.scorer.name()
    }

    fn context(&self) -> &[TokenId] {
        &self.context
    }

    fn extend_and_score(&mut self, new_tokens: &[TokenId]) -> Result<LogitVector> {
        self.scorer.vocabulary().validate_ids(new_tokens)?;
        self.context.extend_from_slice(new_tokens);
        Ok(self.scorer.score(&self.context))
    }
}

impl<S: ContextScorer + 'static> Backend for Arc<S> {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: self.name().to_string(),
            kind: self.kind(),
            vocabulary: self.vocabulary().clone(),
        }
    }

    fn open_session(&self, prompt: &[TokenId], _conditioning: &[u8]) -> Result<Box<dyn Session>> {
        Ok(Box::new(LocalSession::open(self.clone() as Arc<dyn ContextScorer>, prompt)?))
    }
}

/// Parsed `kind:location` backend spec from the CLI, e.g. `table:model.json`,
/// `ngram:corpus.txt?order=2&k=1.0`, `remote:http://127.0.0.1:8080`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub kind: BackendKind,
    pub location: String,
    #[serde(default)]
    pub ngram_order: Option<usize>,
    #[serde(default)]
    pub ngram_k: Option<f64>,
    #[serde(default)]
    pub vocab_size: Option<usize>,
    #[serde(default)]
    pub eos_ids: Option<Vec<TokenId>>,
}

impl BackendConfig {
    pub fn parse(name: &str, spec: &str) -> Result<Self> {
        let (kind_str, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("backend spec '{spec}' is not kind:location")))?;
        let kind = match kind_str {
            "table" => BackendKind::Table,
            "ngram" => BackendKind::Ngram,
            "remote" => BackendKind::Remote,
            other => return Err(Error::Config(format!("unknown backend kind '{other}'"))),
        };
        let mut cfg = Self {
            name: name.to_string(),
            kind,
            location: rest.to_string(),
            ngram_order: None,
            ngram_k: None,
            vocab_size: None,
            eos_ids: None,
        };
        if kind == BackendKind::Ngram {
            if let Some((path, query)) = rest.split_once('?') {
                cfg.location = path.to_string();
                for pair in query.split('&') {
                    let (key, value) = pair
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("bad ngram param '{pair}'")))?;
                    match key {
                        "order" => cfg.ngram_order = Some(parse_param(key, value)?),
                        "k" => cfg.ngram_k = Some(parse_param(key, value)?),
                        "vocab" => cfg.vocab_size = Some(parse_param(key, value)?),
                        "eos" => {
                            cfg.eos_ids = Some(
                                value
                                    .split('+')
                                    .map(|v| parse_param("eos", v))
                                    .collect::<Result<_>>()?,
                            )
                        }
                        other => return Err(Error::Config(format!("unknown ngram param '{other}'"))),
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>> {
        match self.kind {
            BackendKind::Table => {
                let model = TableModel::load(&self.location, &self.name)?;
                Ok(Arc::new(Arc::new(model)))
            }
            BackendKind::Ngram => {
                let corpus = ngram::load_corpus(&self.location)?;
                let order = self.ngram_order.unwrap_or(2);
                let k = self.ngram_k.unwrap_or(1.0);
                let vocab = ngram::corpus_vocabulary(
                    &corpus,
                    self.vocab_size,
                    self.eos_ids.clone().unwrap_or_default(),
                    &self.name,
                )?;
                let model = train_ngram(&corpus, order, k, vocab)?;
                Ok(Arc::new(Arc::new(model)))
            }
            BackendKind::Remote => {
                let backend = RemoteBackend::connect(&self.name, &self.location)?;
                Ok(Arc::new(backend))
            }
        }
    }
}

fn parse_param<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for ngram param '{key}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_table_spec() {
        let cfg = BackendConfig::parse("base", "table:fixtures/base.json").unwrap();
        assert_eq!(cfg.kind, BackendKind::Table);
        assert_eq!(cfg.location, "fixtures/base.json");
    }

    #[test]
    fn parse_ngram_spec_with_params() {
        let cfg = BackendConfig::parse("e", "ngram:c.txt?order=3&k=0.5&vocab=64&eos=63").unwrap();
        assert_eq!(cfg.kind, BackendKind::Ngram);
        assert_eq!(cfg.location, "c.txt");
        assert_eq!(cfg.ngram_order, Some(3));
        assert_eq!(cfg.ngram_k, Some(0.5));
        assert_eq!(cfg.vocab_size, Some(64));
        assert_eq!(cfg.eos_ids, Some(vec![63]));
    }

    #[test]
    fn parse_rejects_unknown_kind() {
        assert!(BackendConfig::parse("x", "magic:path").is_err());
        assert!(BackendConfig::parse("x", "no-colon").is_err());
    }
}
