//! Next-token selection and the autoregressive decode loop driving three
//! synchronized sessions.
//!
//! Sampling randomness comes from a portable keyed stream: SHA-256 of
//! `(seed, request id)` keys a ChaCha8 generator, one independent stream per
//! request, so concurrent requests and call ordering never perturb each
//! other's draws.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::wire;
use crate::core::{stable_softmax, LogitVector, TokenId, TokenSeq, Vocabulary};
use crate::scheduler::{run_step, SessionTriple, StepScheduler};
use crate::steering::{proxy_combine, SteeringSpec};
use crate::{Error, Result};

/// One independent RNG stream keyed by `(seed, request id)`.
pub fn request_rng(seed: u64, request_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(request_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Greedy,
    Temperature,
    TopP,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn greedy() -> Self {
        Self { kind: SamplerKind::Greedy, temperature: 1.0, top_p: 1.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != SamplerKind::Greedy && (!(self.temperature > 0.0) || !self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.kind == SamplerKind::TopP && !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0,1], got {}", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub steering: SteeringSpec,
    pub sampler: SamplerSpec,
    pub max_new_tokens: usize,
    pub stop_on_eos: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Eos,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Generated tokens only (prompt excluded); a terminating EOS is
    /// included here and trimmed by [`DecodeResult::trimmed_tokens`].
    pub tokens: TokenSeq,
    /// Combined-distribution mass on the chosen token, per step.
    pub per_step_chosen_prob: Vec<f64>,
    pub stop_reason: StopReason,
}

impl DecodeResult {
    /// Tokens with the terminating EOS (if any) removed, for graders.
    pub fn trimmed_tokens(&self, vocab: &Vocabulary) -> &[TokenId] {
        match self.tokens.last() {
            Some(&last) if vocab.is_eos(last) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Argmax selection, lowest id on ties.
pub fn select_greedy(z: &LogitVector) -> TokenId {
    z.argmax()
}

/// Temperature + nucleus sampling: scale by 1/T, softmax, sort descending
/// (ties by lowest id), keep the smallest prefix with cumulative mass >=
/// `top_p` (boundary token included), renormalize, inverse-CDF draw.
pub fn select_top_p(z: &LogitVector, top_p: f64, temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    let scaled = LogitVector::new(z.values().iter().map(|&v| v / temperature).collect())
        .expect("finite logits stay finite under positive temperature");
    let probs = stable_softmax(&scaled);

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs.values()[b].partial_cmp(&probs.values()[a]).unwrap().then(a.cmp(&b))
    });

    let mut kept = Vec::new();
    let mut kept_mass = 0.0f64;
    for idx in order {
        kept_mass += probs.values()[idx];
        kept.push(idx);
        if kept_mass >= top_p {
            break;
        }
    }

    let target = rng.gen::<f64>() * kept_mass;
    let mut cum = 0.0f64;
    for &idx in &kept {
        cum += probs.values()[idx];
        if target < cum {
            return idx as TokenId;
        }
    }
    *kept.last().unwrap() as TokenId
}

fn select_token(sampler: &SamplerSpec, combined: &LogitVector, rng: &mut ChaCha8Rng) -> TokenId {
    match sampler.kind {
        SamplerKind::Greedy => select_greedy(combined),
        SamplerKind::Temperature => select_top_p(combined, 1.0, sampler.temperature, rng),
        SamplerKind::TopP => select_top_p(combined, sampler.top_p, sampler.temperature, rng),
    }
}

#[derive(Serialize)]
struct StepTraceRecord {
    step: usize,
    z_base: Vec<String>,
    z_expert: Vec<String>,
    z_amateur: Vec<String>,
    combined: Vec<String>,
    chosen: TokenId,
    prob: String,
}

/// Runs the three-session feedback loop: per step the scheduler gathers all
/// three logit vectors, they are combined, a token is selected and appended
/// to every session. Stops on EOS (when configured) or at `max_new_tokens`.
/// The result is identical for any scheduler given the same config and RNG.
pub fn decode(
    sessions: &mut SessionTriple,
    vocab: &Vocabulary,
    config: &DecodeConfig,
    scheduler: &StepScheduler,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut dyn Write>,
) -> Result<DecodeResult> {
    config.sampler.validate()?;
    if config.max_new_tokens < 1 {
        return Err(Error::Config("max_new_tokens must be >= 1".into()));
    }
    let alpha = config.steering.alpha;

    let mut tokens: TokenSeq = Vec::new();
    let mut per_step_chosen_prob = Vec::new();
    let mut pending: TokenSeq = Vec::new();

    for step in 0..config.max_new_tokens {
        let (zb, ze, za) = match run_step(scheduler, sessions, &pending) {
            Ok(triple) => triple,
            Err(Error::BackendUnavailable { backend, step: _, message }) => {
                return Err(Error::DecodeAborted { backend, step, partial: tokens, message });
            }
            Err(other) => return Err(other),
        };
        let combined = proxy_combine(&zb, &ze, &za, alpha)?;
        let probs = stable_softmax(&combined);
        let chosen = select_token(&config.sampler, &combined, rng);
        let prob = probs.get(chosen);

        if let Some(out) = trace.as_deref_mut() {
            let record = StepTraceRecord {
                step,
                z_base: wire::encode_logits(&zb),
                z_expert: wire::encode_logits(&ze),
                z_amateur: wire::encode_logits(&za),
                combined: wire::encode_logits(&combined),
                chosen,
                prob: wire::encode_f64(prob),
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
        }

        tokens.push(chosen);
        per_step_chosen_prob.push(prob);
        pending = vec![chosen];

        if config.stop_on_eos && vocab.is_eos(chosen) {
            return Ok(DecodeResult { tokens, per_step_chosen_prob, stop_reason: StopReason::Eos });
        }
    }
    Ok(DecodeResult { tokens, per_step_chosen_prob, stop_reason: StopReason::Length })
}
