//! Remote logits wire protocol: shared request/response bodies and the
//! decimal float encoding used by both the client and the fixture server.
//!
//! Logits travel as decimal strings with 17 significant digits, enough to
//! round-trip any f64 exactly.

use serde::{Deserialize, Serialize};

use crate::core::{LogitVector, TokenId};
use crate::{Error, Result};

/// 17 significant digits: `{:.16e}`.
pub fn encode_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn decode_f64(text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::InvalidLogits(format!("bad decimal float '{text}' on the wire")))
}

pub fn encode_logits(logits: &LogitVector) -> Vec<String> {
    logits.values().iter().map(|&v| encode_f64(v)).collect()
}

pub fn decode_logits(strings: &[String]) -> Result<LogitVector> {
    let values = strings.iter().map(|s| decode_f64(s)).collect::<Result<Vec<_>>>()?;
    LogitVector::new(values)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    pub model: String,
    pub prompt: Vec<TokenId>,
    #[serde(default)]
    pub conditioning_b64: String,
    /// Optional client-side vocabulary declaration; a mismatch is a 409.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OpenSessionResponse {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtendRequest {
    pub session_id: String,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtendResponse {
    pub logits: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub vocab_size: usize,
    pub eos_ids: Vec<TokenId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}
