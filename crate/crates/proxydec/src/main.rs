//! `proxydec` command-line entry point.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use proxydec::backends::BackendConfig;
use proxydec::eval::{
    alpha_sweep, load_dataset, pass_at_k_curve, run_benchmark, tokens_to_text,
    write_transcripts_jsonl, BenchmarkOptions, Dataset, DecodeEngine,
};
use proxydec::sampling::{decode, request_rng, DecodeConfig, SamplerKind, SamplerSpec};
use proxydec::scheduler::{idle_report, simulate_timeline, LatencyModel, StepScheduler, Strategy};
use proxydec::server::serve_blocking;
use proxydec::steering::SteeringSpec;
use proxydec::{Error, Result};

#[derive(Parser)]
#[command(name = "proxydec", version, about = "Three-model logit-steering decoder and evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a single prompt with the steered three-model loop.
    Decode(DecodeArgs),
    /// Run exact-match evaluation over a JSONL dataset.
    Eval(EvalArgs),
    /// Sweep guidance strength alpha over a dataset.
    Sweep(SweepArgs),
    /// Sample n completions per problem and report pass@k curves.
    Passk(PasskArgs),
    /// Simulate sequential vs. concurrent step scheduling under a cost model.
    Simulate(SimulateArgs),
    /// Serve a local table/ngram model over the logits wire protocol.
    ServeFixture(ServeArgs),
}

/// Flags shared by every decoding command. Precedence: flags > config file >
/// built-in defaults (alpha 0.5, temperature 0.6, top-p 0.95, max 4096).
#[derive(Args, Clone)]
struct EngineArgs {
    /// JSON config file supplying any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base backend spec: kind:location (table:..., ngram:..., remote:...).
    #[arg(long)]
    base: Option<String>,
    /// Expert backend spec.
    #[arg(long)]
    expert: Option<String>,
    /// Amateur backend spec.
    #[arg(long)]
    amateur: Option<String>,
    /// Guidance strength.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sampler kind: greedy | temperature | top_p.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    /// Step scheduling strategy: sequential | concurrent.
    #[arg(long)]
    strategy: Option<String>,
    /// Device-group assignment, e.g. "base=0,expert=1,amateur=1".
    #[arg(long)]
    groups: Option<String>,
    /// Lift the alpha clamp at 16.
    #[arg(long)]
    allow_large_alpha: bool,
    /// Worker parallelism for dataset commands.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Prompt as comma-separated token ids.
    #[arg(long)]
    prompt: Option<String>,
    /// Prompt as text, tokenized bytewise.
    #[arg(long)]
    prompt_text: Option<String>,
    /// Base64 conditioning payload forwarded to all backends.
    #[arg(long, default_value = "")]
    conditioning_b64: String,
    /// Write a per-step logit trace (JSONL) to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per problem (first sample feeds accuracy).
    #[arg(long)]
    n: Option<usize>,
    /// Drop multiple-choice problems before running.
    #[arg(long)]
    filter_multiple_choice: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated alphas, e.g. "0.0,0.5,1.0".
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    filter_multiple_choice: bool,
}

#[derive(Args)]
struct PasskArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per problem.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated k values; default 1..=min(n,10).
    #[arg(long)]
    ks: Option<String>,
    #[arg(long)]
    filter_multiple_choice: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Latency model JSON file.
    #[arg(long)]
    latency: PathBuf,
    #[arg(long, default_value_t = 0)]
    prompt_len: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Device-group assignment, e.g. "base=0,expert=1,amateur=2".
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Model to serve: kind:location (table or ngram).
    #[arg(long)]
    model: String,
    #[arg(long, default_value = "127.0.0.1:8077")]
    addr: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    base: Option<String>,
    expert: Option<String>,
    amateur: Option<String>,
    alpha: Option<f64>,
    sampler: Option<String>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    seed: Option<u64>,
    max_new_tokens: Option<usize>,
    strategy: Option<String>,
    groups: Option<String>,
    dataset: Option<String>,
    out: Option<String>,
    jobs: Option<usize>,
    n: Option<usize>,
    ks: Option<String>,
    alphas: Option<String>,
    allow_large_alpha: Option<bool>,
}

struct Resolved {
    engine: DecodeEngine,
    jobs: usize,
    /// Full configuration echo embedded in every output artifact.
    echo: serde_json::Value,
}

fn parse_groups(spec: &str) -> Result<BTreeMap<String, u32>> {
    let mut map = BTreeMap::new();
    for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, group) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad group assignment '{pair}', expected name=id")))?;
        let id = group
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad group id in '{pair}'")))?;
        map.insert(name.trim().to_string(), id);
    }
    Ok(map)
}

fn parse_sampler_kind(name: &str) -> Result<SamplerKind> {
    match name {
        "greedy" => Ok(SamplerKind::Greedy),
        "temperature" => Ok(SamplerKind::Temperature),
        "top_p" => Ok(SamplerKind::TopP),
        other => Err(Error::Config(format!("unknown sampler '{other}'"))),
    }
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    match name {
        "sequential" => Ok(Strategy::Sequential),
        "concurrent" => Ok(Strategy::Concurrent),
        other => Err(Error::Config(format!("unknown strategy '{other}'"))),
    }
}

fn parse_comma_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    spec.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad {what} value '{p}'"))))
        .collect()
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("malformed config '{}': {e}", path.display())))
        }
    }
}

/// Resolves flags over the config file over defaults and builds the engine.
fn resolve(args: &EngineArgs, default_sampler: SamplerKind) -> Result<(Resolved, FileConfig)> {
    let file = load_file_config(args.config.as_deref())?;

    let backend_spec = |flag: &Option<String>, file_val: &Option<String>, role: &str| {
        flag.clone()
            .or_else(|| file_val.clone())
            .ok_or_else(|| Error::Config(format!("missing --{role} backend spec")))
    };
    let base_spec = backend_spec(&args.base, &file.base, "base")?;
    let expert_spec = backend_spec(&args.expert, &file.expert, "expert")?;
    let amateur_spec = backend_spec(&args.amateur, &file.amateur, "amateur")?;

    let alpha = args.alpha.or(file.alpha).unwrap_or(0.5);
    let sampler_kind = match args.sampler.as_deref().or(file.sampler.as_deref()) {
        Some(name) => parse_sampler_kind(name)?,
        None => default_sampler,
    };
    let sampler = SamplerSpec {
        kind: sampler_kind,
        temperature: args.temperature.or(file.temperature).unwrap_or(0.6),
        top_p: args.top_p.or(file.top_p).unwrap_or(0.95),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let max_new_tokens = args.max_new_tokens.or(file.max_new_tokens).unwrap_or(4096);
    let strategy = match args.strategy.as_deref().or(file.strategy.as_deref()) {
        Some(name) => parse_strategy(name)?,
        None => Strategy::Sequential,
    };
    let groups = match args.groups.as_deref().or(file.groups.as_deref()) {
        Some(spec) => parse_groups(spec)?,
        None => BTreeMap::new(),
    };
    let allow_large_alpha = args.allow_large_alpha || file.allow_large_alpha.unwrap_or(false);
    let jobs = args.jobs.or(file.jobs).unwrap_or(1);

    let base_cfg = BackendConfig::parse("base", &base_spec)?;
    let expert_cfg = BackendConfig::parse("expert", &expert_spec)?;
    let amateur_cfg = BackendConfig::parse("amateur", &amateur_spec)?;

    let steering = SteeringSpec {
        alpha,
        base: "base".into(),
        expert: "expert".into(),
        amateur: "amateur".into(),
    };
    steering.validate(allow_large_alpha)?;
    sampler.validate()?;

    let scheduler = StepScheduler { strategy, group_assignment: groups.clone() };
    let config = DecodeConfig { steering, sampler: sampler.clone(), max_new_tokens, stop_on_eos: true };

    let engine = DecodeEngine::new(
        base_cfg.build()?,
        expert_cfg.build()?,
        amateur_cfg.build()?,
        scheduler,
        config,
    )?;

    let echo = json!({
        "base": base_spec,
        "expert": expert_spec,
        "amateur": amateur_spec,
        "alpha": alpha,
        "sampler": sampler,
        "max_new_tokens": max_new_tokens,
        "strategy": strategy,
        "groups": groups,
        "allow_large_alpha": allow_large_alpha,
        "jobs": jobs,
        "backend_hashes": {
            "base": file_hash(&base_cfg.location),
            "expert": file_hash(&expert_cfg.location),
            "amateur": file_hash(&amateur_cfg.location),
        },
    });

    Ok((Resolved { engine, jobs, echo }, file))
}

/// SHA-256 of a local input file; remote locations hash to "remote".
fn file_hash(location: &str) -> String {
    match fs::read(location) {
        Ok(bytes) => format!("{:x}", Sha256::digest(&bytes)),
        Err(_) => "remote".to_string(),
    }
}

fn unix_timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// All output files carry the timestamp in this single header field.
fn summary_object(echo: &serde_json::Value, body: serde_json::Value) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("generated_at".into(), json!(unix_timestamp()));
    obj.insert("config".into(), echo.clone());
    if let serde_json::Value::Object(body) = body {
        obj.extend(body);
    }
    serde_json::Value::Object(obj)
}

fn write_out(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing --{flag}")))
}

fn dataset_for(path: Option<PathBuf>, file: &FileConfig) -> Result<(Dataset, PathBuf)> {
    let path = path
        .or_else(|| file.dataset.clone().map(PathBuf::from))
        .ok_or_else(|| Error::Config("missing --dataset".into()))?;
    Ok((load_dataset(&path)?, path))
}

fn out_dir_for(out: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    out.or_else(|| file.out.clone().map(PathBuf::from))
        .ok_or_else(|| Error::Config("missing --out".into()))
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let (resolved, _) = resolve(&args.engine, SamplerKind::Greedy)?;
    let prompt = match (&args.prompt, &args.prompt_text) {
        (Some(ids), _) => parse_comma_list(ids, "token id")?,
        (None, Some(text)) => text.bytes().map(u32::from).collect(),
        (None, None) => Vec::new(),
    };
    let conditioning = base64_decode(&args.conditioning_b64)?;

    let engine = &resolved.engine;
    let mut sessions = engine.open_sessions(&prompt, &conditioning)?;
    let mut rng = request_rng(engine.config.sampler.seed, "cli-decode");
    let mut trace_file = match &args.trace {
        Some(path) => Some(fs::File::create(path)?),
        None => None,
    };
    let result = decode(
        &mut sessions,
        &engine.vocabulary,
        &engine.config,
        &engine.scheduler,
        &mut rng,
        trace_file.as_mut().map(|f| f as &mut dyn Write),
    )?;

    let ids: Vec<String> = result.tokens.iter().map(|t| t.to_string()).collect();
    println!("tokens: {}", ids.join(","));
    println!("text: {}", tokens_to_text(result.trimmed_tokens(&engine.vocabulary), &engine.vocabulary));
    println!("stop_reason: {:?}", result.stop_reason);
    Ok(())
}

fn base64_decode(b64: &str) -> Result<Vec<u8>> {
    use base64::Engine as _;
    base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| Error::Config(format!("bad base64 conditioning: {e}")))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (resolved, file) = resolve(&args.engine, SamplerKind::Greedy)?;
    let (dataset, dataset_path) = dataset_for(args.dataset, &file)?;
    let out = out_dir_for(args.out, &file)?;
    let options = BenchmarkOptions {
        n_samples: args.n.or(file.n).unwrap_or(1),
        jobs: resolved.jobs,
        filter_multiple_choice: args.filter_multiple_choice,
    };
    let report = run_benchmark(&resolved.engine, &dataset, &options)?;

    let mut transcripts = Vec::new();
    write_transcripts_jsonl(&report.transcripts, &mut transcripts)?;
    write_out(&out, "transcripts.jsonl", &transcripts)?;

    let summary = summary_object(
        &resolved.echo,
        json!({
            "dataset": dataset_path,
            "dataset_hash": dataset.content_hash,
            "n_samples": options.n_samples,
            "accuracy": report.accuracy,
            "graded_count": report.graded_count,
            "errored_count": report.errored_count,
            "records": report.records,
        }),
    );
    write_out(&out, "summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!("accuracy: {:.4} ({} graded, {} errored)", report.accuracy, report.graded_count, report.errored_count);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let (resolved, file) = resolve(&args.engine, SamplerKind::Greedy)?;
    let (dataset, dataset_path) = dataset_for(args.dataset, &file)?;
    let out = out_dir_for(args.out, &file)?;
    let alphas_spec = args
        .alphas
        .or(file.alphas.clone())
        .ok_or_else(|| Error::Config("missing --alphas".into()))?;
    let alphas: Vec<f64> = parse_comma_list(&alphas_spec, "alpha")?;
    for &alpha in &alphas {
        let mut spec = resolved.engine.config.steering.clone();
        spec.alpha = alpha;
        spec.validate(args.engine.allow_large_alpha || file.allow_large_alpha.unwrap_or(false))?;
    }
    let options = BenchmarkOptions {
        n_samples: 1,
        jobs: resolved.jobs,
        filter_multiple_choice: args.filter_multiple_choice,
    };
    let report = alpha_sweep(&resolved.engine, &dataset, &options, &alphas)?;

    let mut csv = String::from("alpha,accuracy\n");
    for (alpha, acc) in report.alphas.iter().zip(&report.accuracy) {
        csv.push_str(&format!("{alpha},{acc:.6}\n"));
    }
    write_out(&out, "sweep.csv", csv.as_bytes())?;
    let summary = summary_object(
        &resolved.echo,
        json!({
            "dataset": dataset_path,
            "dataset_hash": dataset.content_hash,
            "alphas": report.alphas,
            "accuracy": report.accuracy,
            "best_alpha": report.best_alpha,
        }),
    );
    write_out(&out, "summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    for (alpha, acc) in report.alphas.iter().zip(&report.accuracy) {
        println!("alpha {alpha}: accuracy {acc:.4}");
    }
    println!("best_alpha: {}", report.best_alpha);
    Ok(())
}

fn cmd_passk(args: PasskArgs) -> Result<()> {
    let (resolved, file) = resolve(&args.engine, SamplerKind::TopP)?;
    let (dataset, dataset_path) = dataset_for(args.dataset, &file)?;
    let out = out_dir_for(args.out, &file)?;
    let n = require(args.n.or(file.n), "n")?;
    let ks: Vec<usize> = match args.ks.or(file.ks.clone()) {
        Some(spec) => parse_comma_list(&spec, "k")?,
        None => (1..=n.min(10)).collect(),
    };
    let options = BenchmarkOptions {
        n_samples: n,
        jobs: resolved.jobs,
        filter_multiple_choice: args.filter_multiple_choice,
    };
    let report = run_benchmark(&resolved.engine, &dataset, &options)?;
    let curve = pass_at_k_curve(&report.records, &ks)?;

    let mut transcripts = Vec::new();
    write_transcripts_jsonl(&report.transcripts, &mut transcripts)?;
    write_out(&out, "transcripts.jsonl", &transcripts)?;

    let mut csv = String::from("k,pass_at_k\n");
    for (k, v) in &curve {
        csv.push_str(&format!("{k},{v:.6}\n"));
    }
    write_out(&out, "curve.csv", csv.as_bytes())?;

    let summary = summary_object(
        &resolved.echo,
        json!({
            "dataset": dataset_path,
            "dataset_hash": dataset.content_hash,
            "n": n,
            "ks": ks,
            "curve": curve.iter().map(|(k, v)| json!({"k": k, "pass_at_k": v})).collect::<Vec<_>>(),
            "records": report.records,
            "errored_count": report.errored_count,
        }),
    );
    write_out(&out, "summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    for (k, v) in &curve {
        println!("pass@{k}: {v:.4}");
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let latency = LatencyModel::load(&args.latency)?;
    let groups = match &args.groups {
        Some(spec) => parse_groups(spec)?,
        None => BTreeMap::new(),
    };
    let sequential = simulate_timeline(
        &latency,
        &StepScheduler { strategy: Strategy::Sequential, group_assignment: groups.clone() },
        args.prompt_len,
        args.steps,
    )?;
    let concurrent = simulate_timeline(
        &latency,
        &StepScheduler { strategy: Strategy::Concurrent, group_assignment: groups.clone() },
        args.prompt_len,
        args.steps,
    )?;
    let speedup = if concurrent.makespan_ms > 0.0 {
        sequential.makespan_ms / concurrent.makespan_ms
    } else {
        1.0
    };

    if let Some(out) = &args.out {
        let echo = json!({
            "latency": args.latency,
            "latency_hash": file_hash(&args.latency.to_string_lossy()),
            "prompt_len": args.prompt_len,
            "steps": args.steps,
            "groups": groups,
        });
        let timeline = summary_object(
            &echo,
            json!({
                "sequential": sequential,
                "concurrent": concurrent,
                "speedup": speedup,
            }),
        );
        write_out(out, "timeline.json", serde_json::to_string_pretty(&timeline)?.as_bytes())?;

        let mut csv = String::from("strategy,group,busy_ms,idle_fraction\n");
        for (label, trace) in [("sequential", &sequential), ("concurrent", &concurrent)] {
            for row in idle_report(trace).rows {
                csv.push_str(&format!(
                    "{label},{},{:.4},{:.4}\n",
                    row.group, row.busy_ms, row.idle_fraction
                ));
            }
        }
        write_out(out, "utilization.csv", csv.as_bytes())?;
    }

    println!("sequential_makespan_ms: {}", sequential.makespan_ms);
    println!("concurrent_makespan_ms: {}", concurrent.makespan_ms);
    println!("speedup: {speedup:.2}×");
    Ok(())
}

fn cmd_serve_fixture(args: ServeArgs) -> Result<()> {
    let cfg = BackendConfig::parse("fixture", &args.model)?;
    let backend = cfg.build()?;
    serve_blocking(backend, &args.addr)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::DatasetValidation { .. } => 4,
        Error::BackendUnavailable { .. } | Error::DecodeAborted { .. } | Error::SessionInit { .. } => 3,
        Error::Io(e) if e.kind() == std::io::ErrorKind::AddrInUse => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PROXYDEC_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decode(args) => cmd_decode(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Passk(args) => cmd_passk(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::ServeFixture(args) => cmd_serve_fixture(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
