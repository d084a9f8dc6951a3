//! Logit combination: the base + alpha * (expert - amateur) rule and its
//! generalization to weighted logit ensembles.
//!
//! Combination happens on raw logits before any sampler temperature; the
//! sampler applies temperature to the combined vector afterwards.

use serde::{Deserialize, Serialize};

use crate::core::LogitVector;
use crate::{Error, Result};

/// Guidance strength is clamped here unless the caller opts out.
pub const ALPHA_CLAMP_MAX: f64 = 16.0;

/// Role assignment plus guidance strength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub alpha: f64,
    pub base: String,
    pub expert: String,
    pub amateur: String,
}

impl SteeringSpec {
    /// Validates alpha; `allow_large_alpha` lifts the [0, 16] clamp.
    pub fn validate(&self, allow_large_alpha: bool) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !allow_large_alpha && self.alpha > ALPHA_CLAMP_MAX {
            return Err(Error::Config(format!(
                "alpha {} exceeds clamp {ALPHA_CLAMP_MAX}; pass the override to allow it",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Weighted-sum normal form. The three-role rule is
/// `[(1, base), (alpha, expert), (-alpha, amateur)]`.
#[derive(Debug, Clone)]
pub struct LogitEnsemble {
    pub terms: Vec<(f64, String)>,
}

impl LogitEnsemble {
    pub fn proxy_normal_form(spec: &SteeringSpec) -> Self {
        Self {
            terms: vec![
                (1.0, spec.base.clone()),
                (spec.alpha, spec.expert.clone()),
                (-spec.alpha, spec.amateur.clone()),
            ],
        }
    }
}

/// Elementwise `z_base + alpha * (z_expert - z_amateur)`.
pub fn proxy_combine(
    z_base: &LogitVector,
    z_expert: &LogitVector,
    z_amateur: &LogitVector,
    alpha: f64,
) -> Result<LogitVector> {
    if z_base.len() != z_expert.len() || z_base.len() != z_amateur.len() {
        return Err(Error::VocabMismatch(format!(
            "logit lengths differ: base {}, expert {}, amateur {}",
            z_base.len(),
            z_expert.len(),
            z_amateur.len()
        )));
    }
    let values = z_base
        .values()
        .iter()
        .zip(z_expert.values())
        .zip(z_amateur.values())
        .map(|((&b, &e), &a)| b + alpha * (e - a))
        .collect();
    LogitVector::new(values)
}

/// Weighted sum of one logit vector per ensemble term.
pub fn combine_ensemble(logits: &[LogitVector], ensemble: &LogitEnsemble) -> Result<LogitVector> {
    if ensemble.terms.is_empty() {
        return Err(Error::Config("ensemble has no terms".into()));
    }
    if logits.len() != ensemble.terms.len() {
        return Err(Error::Config(format!(
            "ensemble arity mismatch: {} logit vectors for {} terms",
            logits.len(),
            ensemble.terms.len()
        )));
    }
    let len = logits[0].len();
    if logits.iter().any(|z| z.len() != len) {
        return Err(Error::VocabMismatch("ensemble logit lengths differ".into()));
    }
    let mut acc = vec![0.0f64; len];
    for ((weight, _), z) in ensemble.terms.iter().zip(logits) {
        for (a, &v) in acc.iter_mut().zip(z.values()) {
            *a += weight * v;
        }
    }
    LogitVector::new(acc)
}

/// Smallest `alpha*` such that for every `alpha > alpha*`,
/// `argmax(z_base + alpha * delta) == argmax(delta)`.
///
/// With `m = argmax(delta)` this is
/// `max over j != m of (z_base[j] - z_base[m]) / (delta[m] - delta[j])`
/// clamped at 0. Requires a unique delta argmax so every denominator is
/// strictly positive.
pub fn dominance_bound(z_base: &LogitVector, delta: &LogitVector) -> Result<f64> {
    if z_base.len() != delta.len() {
        return Err(Error::VocabMismatch("dominance_bound length mismatch".into()));
    }
    let m = delta.argmax() as usize;
    let dm = delta.values()[m];
    if delta.values().iter().enumerate().any(|(j, &d)| j != m && d == dm) {
        return Err(Error::UndefinedBound("delta argmax is not unique".into()));
    }
    let bm = z_base.values()[m];
    let mut bound = 0.0f64;
    for (j, (&bj, &dj)) in z_base.values().iter().zip(delta.values()).enumerate() {
        if j == m {
            continue;
        }
        bound = bound.max((bj - bm) / (dm - dj));
    }
    Ok(bound)
}
