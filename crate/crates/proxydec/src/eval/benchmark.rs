//! Dataset ingestion, benchmark runs, and alpha sweeps.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::Backend;
use crate::core::{validate_vocab_compat, TokenId, TokenSeq, Vocabulary};
use crate::eval::grading::{extract_answer, grade, parse_numeric, ProblemKind};
use crate::eval::passk::PassKRecord;
use crate::sampling::{decode, request_rng, DecodeConfig, DecodeResult, StopReason};
use crate::scheduler::{SessionTriple, StepScheduler};
use crate::{Error, Result};

/// Prompt as token ids, or as text tokenized bytewise (one id per byte).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prompt {
    Ids(TokenSeq),
    Text(String),
}

impl Prompt {
    pub fn to_ids(&self) -> TokenSeq {
        match self {
            Prompt::Ids(ids) => ids.clone(),
            Prompt::Text(text) => text.bytes().map(TokenId::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: String,
    pub prompt: Prompt,
    #[serde(default)]
    pub conditioning_b64: Option<String>,
    pub gold: String,
    pub kind: ProblemKind,
    #[serde(default)]
    pub choices: Option<Vec<String>>,
}

impl ProblemRecord {
    pub fn conditioning(&self) -> Result<Vec<u8>> {
        match &self.conditioning_b64 {
            None => Ok(Vec::new()),
            Some(b64) => B64
                .decode(b64)
                .map_err(|e| Error::Config(format!("bad conditioning for problem '{}': {e}", self.id))),
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        let fail = |message: String| Err(Error::DatasetValidation { line, message });
        match self.kind {
            ProblemKind::MultipleChoice => {
                if self.choices.as_ref().map(|c| c.len()).unwrap_or(0) < 2 {
                    return fail(format!("problem '{}' needs >= 2 choices", self.id));
                }
            }
            ProblemKind::Numeric => {
                if parse_numeric(&self.gold).is_err() {
                    return fail(format!("problem '{}' has unparseable numeric gold '{}'", self.id, self.gold));
                }
            }
            ProblemKind::FreeText => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub problems: Vec<ProblemRecord>,
    /// SHA-256 of the raw dataset bytes, for config echoes.
    pub content_hash: String,
}

/// Newline-delimited JSON problem records. Validation failures carry the
/// 1-based line number.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path.as_ref()).map_err(|e| {
        Error::Config(format!("cannot read dataset '{}': {e}", path.as_ref().display()))
    })?;
    let content_hash = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::DatasetValidation { line: 0, message: "dataset is not UTF-8".into() })?;
    let mut problems = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProblemRecord = serde_json::from_str(line).map_err(|e| {
            Error::DatasetValidation { line: lineno, message: format!("bad record: {e}") }
        })?;
        record.validate(lineno)?;
        record.conditioning().map_err(|e| Error::DatasetValidation {
            line: lineno,
            message: e.to_string(),
        })?;
        problems.push(record);
    }
    if problems.is_empty() {
        return Err(Error::DatasetValidation { line: 0, message: "dataset has no problems".into() });
    }
    Ok(Dataset { problems, content_hash })
}

/// Renders generated tokens for graders: EOS ids dropped, ids < 256 as
/// bytes, anything larger as `⟨id⟩`.
pub fn tokens_to_text(tokens: &[TokenId], vocab: &Vocabulary) -> String {
    let mut bytes = Vec::new();
    for &id in tokens {
        if vocab.is_eos(id) {
            continue;
        }
        if id < 256 {
            bytes.push(id as u8);
        } else {
            bytes.extend_from_slice(format!("⟨{id}⟩").as_bytes());
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

/// The three backends, scheduler, and decode configuration of one run.
pub struct DecodeEngine {
    pub base: Arc<dyn Backend>,
    pub expert: Arc<dyn Backend>,
    pub amateur: Arc<dyn Backend>,
    pub scheduler: StepScheduler,
    pub config: DecodeConfig,
    pub vocabulary: Vocabulary,
}

impl DecodeEngine {
    /// Fails unless all three backends are vocabulary-compatible.
    pub fn new(
        base: Arc<dyn Backend>,
        expert: Arc<dyn Backend>,
        amateur: Arc<dyn Backend>,
        scheduler: StepScheduler,
        config: DecodeConfig,
    ) -> Result<Self> {
        let vb = base.descriptor().vocabulary;
        let report = validate_vocab_compat(
            &vb,
            &expert.descriptor().vocabulary,
            &amateur.descriptor().vocabulary,
        );
        if let crate::core::CompatReport::Incompatible(problems) = report {
            return Err(Error::VocabMismatch(problems.join("; ")));
        }
        Ok(Self { base, expert, amateur, scheduler, config, vocabulary: vb })
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut config = self.config.clone();
        config.steering.alpha = alpha;
        Self {
            base: self.base.clone(),
            expert: self.expert.clone(),
            amateur: self.amateur.clone(),
            scheduler: self.scheduler.clone(),
            config,
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn open_sessions(&self, prompt: &[TokenId], conditioning: &[u8]) -> Result<SessionTriple> {
        Ok(SessionTriple {
            base: self.base.open_session(prompt, conditioning)?,
            expert: self.expert.open_session(prompt, conditioning)?,
            amateur: self.amateur.open_session(prompt, conditioning)?,
        })
    }

    /// One decode request with its own RNG stream keyed by
    /// `(sampler seed, request_id)`.
    pub fn decode_request(
        &self,
        prompt: &[TokenId],
        conditioning: &[u8],
        request_id: &str,
    ) -> Result<DecodeResult> {
        let mut sessions = self.open_sessions(prompt, conditioning)?;
        let mut rng = request_rng(self.config.sampler.seed, request_id);
        decode(&mut sessions, &self.vocabulary, &self.config, &self.scheduler, &mut rng, None)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub problem_id: String,
    pub sample_index: usize,
    pub tokens: TokenSeq,
    pub text: String,
    pub extracted: Option<String>,
    pub pass: bool,
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    /// Mean grade over each problem's first sample; errored problems are
    /// excluded from the mean but counted, never silently dropped.
    pub accuracy: f64,
    pub graded_count: usize,
    pub errored_count: usize,
    pub records: Vec<PassKRecord>,
    pub transcripts: Vec<Transcript>,
}

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkOptions {
    pub n_samples: usize,
    pub jobs: usize,
    pub filter_multiple_choice: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { n_samples: 1, jobs: 1, filter_multiple_choice: false }
    }
}

struct ProblemOutcome {
    transcripts: Vec<Transcript>,
    first_sample_pass: Option<bool>,
    record: Option<PassKRecord>,
    errored: bool,
}

fn run_problem(engine: &DecodeEngine, problem: &ProblemRecord, n_samples: usize) -> ProblemOutcome {
    let prompt = problem.prompt.to_ids();
    let conditioning = problem.conditioning().unwrap_or_default();
    let mut transcripts = Vec::with_capacity(n_samples);
    let mut passes = 0usize;
    let mut errored = false;

    for sample_index in 0..n_samples {
        let request_id = format!("{}/{sample_index}", problem.id);
        match engine.decode_request(&prompt, &conditioning, &request_id) {
            Ok(result) => {
                let text = tokens_to_text(result.trimmed_tokens(&engine.vocabulary), &engine.vocabulary);
                let extracted = extract_answer(&text, problem.kind, problem.choices.as_deref());
                let pass = grade(extracted.as_deref(), &problem.gold, problem.kind);
                passes += pass as usize;
                transcripts.push(Transcript {
                    problem_id: problem.id.clone(),
                    sample_index,
                    tokens: result.tokens,
                    text,
                    extracted,
                    pass,
                    stop_reason: Some(result.stop_reason),
                    error: None,
                });
            }
            Err(e) => {
                errored = true;
                transcripts.push(Transcript {
                    problem_id: problem.id.clone(),
                    sample_index,
                    tokens: Vec::new(),
                    text: String::new(),
                    extracted: None,
                    pass: false,
                    stop_reason: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    ProblemOutcome {
        first_sample_pass: (!errored).then(|| transcripts[0].pass),
        record: (!errored).then(|| PassKRecord {
            problem_id: problem.id.clone(),
            n: n_samples,
            c: passes,
        }),
        transcripts,
        errored,
    }
}

/// Decodes `n_samples` per problem and grades every sample. Problems run
/// concurrently up to `jobs`; per-request RNG streams keep the outputs
/// independent of scheduling, and aggregation follows dataset order.
pub fn run_benchmark(
    engine: &DecodeEngine,
    dataset: &Dataset,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if options.n_samples < 1 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let problems: Vec<&ProblemRecord> = dataset
        .problems
        .iter()
        .filter(|p| !(options.filter_multiple_choice && p.kind == ProblemKind::MultipleChoice))
        .collect();
    if problems.is_empty() {
        return Err(Error::Config("no problems left after filtering".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<ProblemOutcome> = pool.install(|| {
        problems
            .par_iter()
            .map(|problem| run_problem(engine, problem, options.n_samples))
            .collect()
    });

    let mut transcripts = Vec::new();
    let mut records = Vec::new();
    let mut graded = 0usize;
    let mut passed = 0usize;
    let mut errored = 0usize;
    for outcome in outcomes {
        transcripts.extend(outcome.transcripts);
        if let Some(pass) = outcome.first_sample_pass {
            graded += 1;
            passed += pass as usize;
        }
        if let Some(record) = outcome.record {
            records.push(record);
        }
        errored += outcome.errored as usize;
    }
    Ok(BenchmarkReport {
        accuracy: if graded > 0 { passed as f64 / graded as f64 } else { 0.0 },
        graded_count: graded,
        errored_count: errored,
        records,
        transcripts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub alphas: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Attains the max accuracy; ties resolve to the smallest alpha.
    pub best_alpha: f64,
}

/// One benchmark per alpha, everything else (including seeds) held fixed.
pub fn alpha_sweep(
    engine: &DecodeEngine,
    dataset: &Dataset,
    options: &BenchmarkOptions,
    alphas: &[f64],
) -> Result<SweepReport> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha sweep needs at least one alpha".into()));
    }
    if let Some(&bad) = alphas.iter().find(|&&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(Error::Config(format!("sweep alpha must be finite and >= 0, got {bad}")));
    }
    let mut accuracy = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let report = run_benchmark(&engine.with_alpha(alpha), dataset, options)?;
        accuracy.push(report.accuracy);
    }
    let mut best = 0usize;
    for (i, &acc) in accuracy.iter().enumerate() {
        if acc > accuracy[best] || (acc == accuracy[best] && alphas[i] < alphas[best]) {
            best = i;
        }
    }
    Ok(SweepReport { alphas: alphas.to_vec(), accuracy, best_alpha: alphas[best] })
}

pub fn write_transcripts_jsonl(transcripts: &[Transcript], mut out: impl std::io::Write) -> Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
