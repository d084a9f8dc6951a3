//! Exact lookup-table backend: longest-matching-suffix entries with a
//! declared max suffix length and a default vector. Serves as the test
//! oracle for end-to-end decoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendKind, ContextScorer};
use crate::core::{LogitVector, TokenId, Vocabulary};
use crate::{Error, Result};

pub struct TableModel {
    name: String,
    vocabulary: Vocabulary,
    max_suffix_len: usize,
    entries: HashMap<Vec<TokenId>, LogitVector>,
    default: LogitVector,
}

/// On-disk form: suffix keys are comma-joined ids ("1,2,3"; "" for the
/// empty suffix), values are |V|-length logit arrays.
#[derive(Serialize, Deserialize)]
pub struct TableModelFile {
    pub name: Option<String>,
    pub vocab_size: usize,
    #[serde(default)]
    pub eos_ids: Vec<TokenId>,
    pub max_suffix_len: usize,
    pub default: Vec<f64>,
    #[serde(default)]
    pub entries: HashMap<String, Vec<f64>>,
}

impl TableModel {
    pub fn new(
        name: &str,
        vocabulary: Vocabulary,
        max_suffix_len: usize,
        entries: HashMap<Vec<TokenId>, LogitVector>,
        default: LogitVector,
    ) -> Result<Self> {
        if default.len() != vocabulary.size {
            return Err(Error::Config(format!(
                "table default length {} != vocab size {}",
                default.len(),
                vocabulary.size
            )));
        }
        for (suffix, logits) in &entries {
            if suffix.len() > max_suffix_len {
                return Err(Error::Config(format!(
                    "table suffix {suffix:?} longer than max_suffix_len {max_suffix_len}"
                )));
            }
            vocabulary.validate_ids(suffix)?;
            if logits.len() != vocabulary.size {
                return Err(Error::Config(format!(
                    "table entry {suffix:?} has {} logits, vocab size is {}",
                    logits.len(),
                    vocabulary.size
                )));
            }
        }
        Ok(Self { name: name.to_string(), vocabulary, max_suffix_len, entries, default })
    }

    pub fn load(path: impl AsRef<Path>, name: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read table model '{}': {e}", path.display()))
        })?;
        let file: TableModelFile = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("malformed table model '{}': {e}", path.display()))
        })?;
        Self::from_file(file, name)
    }

    pub fn from_file(file: TableModelFile, fallback_name: &str) -> Result<Self> {
        let name = file.name.unwrap_or_else(|| fallback_name.to_string());
        let vocabulary = Vocabulary::new(file.vocab_size, file.eos_ids, &name)?;
        let mut entries = HashMap::new();
        for (key, values) in file.entries {
            let suffix = parse_suffix_key(&key)?;
            entries.insert(suffix, LogitVector::new(values)?);
        }
        Self::new(&name, vocabulary, file.max_suffix_len, entries, LogitVector::new(file.default)?)
    }
}

fn parse_suffix_key(key: &str) -> Result<Vec<TokenId>> {
    if key.is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad table suffix key '{key}'")))
        })
        .collect()
}

impl ContextScorer for TableModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Table
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn score(&self, context: &[TokenId]) -> LogitVector {
        let longest = self.max_suffix_len.min(context.len());
        for len in (0..=longest).rev() {
            let suffix = &context[context.len() - len..];
            if let Some(logits) = self.entries.get(suffix) {
                return logits.clone();
            }
        }
        self.default.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TableModel {
        let vocab = Vocabulary::new(3, [], "t").unwrap();
        let mut entries = HashMap::new();
        entries.insert(vec![2], LogitVector::new(vec![0.0, 1.0, 0.0]).unwrap());
        entries.insert(vec![1, 2], LogitVector::new(vec![9.0, 0.0, 0.0]).unwrap());
        TableModel::new("t", vocab, 2, entries, LogitVector::new(vec![0.5, 0.5, 0.5]).unwrap())
            .unwrap()
    }

    #[test]
    fn longest_suffix_wins() {
        let m = model();
        assert_eq!(m.score(&[0, 2]).values(), &[0.0, 1.0, 0.0]);
        assert_eq!(m.score(&[1, 2]).values(), &[9.0, 0.0, 0.0]);
        assert_eq!(m.score(&[0, 1]).values(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn suffix_window_is_bounded() {
        // context longer than max_suffix_len still matches on the tail
        let m = model();
        assert_eq!(m.score(&[0, 0, 0, 1, 2]).values(), &[9.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_wrong_length_entry() {
        let vocab = Vocabulary::new(3, [], "t").unwrap();
        let mut entries = HashMap::new();
        entries.insert(vec![0], LogitVector::new(vec![1.0]).unwrap());
        let err = TableModel::new(
            "t",
            vocab,
            1,
            entries,
            LogitVector::new(vec![0.0, 0.0, 0.0]).unwrap(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn file_round_trip() {
        let file = TableModelFile {
            name: Some("fixture".into()),
            vocab_size: 3,
            eos_ids: vec![2],
            max_suffix_len: 1,
            default: vec![0.0, 0.0, 0.0],
            entries: HashMap::from([("1".to_string(), vec![1.0, 2.0, 3.0])]),
        };
        let m = TableModel::from_file(file, "x").unwrap();
        assert_eq!(m.name(), "fixture");
        assert_eq!(m.score(&[0, 1]).values(), &[1.0, 2.0, 3.0]);
    }
}
