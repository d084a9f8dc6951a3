//! Decoding-time logit steering for a (base, expert, amateur) model triple.
//!
//! The engine combines per-step logits from three token-conditioned backends
//! as `z_base + alpha * (z_expert - z_amateur)`, samples autoregressively,
//! and ships the surrounding machinery: pluggable backends (lookup table,
//! add-k n-gram, remote HTTP client plus a fixture server), sequential and
//! barrier-synchronized concurrent per-step scheduling, a timeline cost
//! simulator, and an evaluation harness with exact-match grading, alpha
//! sweeps, and the unbiased pass@k estimator.

pub mod backends;
pub mod core;
pub mod eval;
pub mod sampling;
pub mod scheduler;
pub mod server;
pub mod steering;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
