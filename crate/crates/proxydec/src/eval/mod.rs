//! Evaluation: dataset ingestion, rule-based grading, accuracy reporting,
//! alpha sweeps, and unbiased pass@k curves.

pub mod benchmark;
pub mod grading;
pub mod passk;

pub use benchmark::{
    alpha_sweep, load_dataset, run_benchmark, tokens_to_text, write_transcripts_jsonl,
    BenchmarkOptions, BenchmarkReport, Dataset, DecodeEngine, ProblemRecord, Prompt, SweepReport,
    Transcript,
};
pub use grading::{extract_answer, grade, parse_numeric, ProblemKind, NUMERIC_REL_TOL};
pub use passk::{pass_at_k, pass_at_k_curve, pass_at_k_exact, PassKRecord};
