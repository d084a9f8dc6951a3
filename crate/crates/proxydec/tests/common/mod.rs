#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::json;

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxydec"))
}

/// Writes a table-model file: `entries` maps comma-joined suffix keys to
/// full-vocabulary logit rows.
pub fn write_table(
    path: &Path,
    vocab_size: usize,
    eos_ids: &[u32],
    max_suffix_len: usize,
    default: Vec<f64>,
    entries: BTreeMap<String, Vec<f64>>,
) {
    let file = json!({
        "name": null,
        "vocab_size": vocab_size,
        "eos_ids": eos_ids,
        "max_suffix_len": max_suffix_len,
        "default": default,
        "entries": entries,
    });
    fs::write(path, serde_json::to_string_pretty(&file).unwrap()).unwrap();
}

fn row(vocab: usize, tweaks: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; vocab];
    for &(idx, val) in tweaks {
        v[idx] = val;
    }
    v
}

pub struct ReflectionFixture {
    pub base: PathBuf,
    pub expert: PathBuf,
    pub amateur: PathBuf,
    pub zero_base: PathBuf,
    pub dataset: PathBuf,
}

/// Three-problem free-text fixture over a byte-level vocabulary (size 88,
/// EOS id 0; tokens 65/66/87 render as A/B/W).
///
/// - p1 (gold "W"): base favors A by 1; expert-amateur delta puts +3.0 on W,
///   so the answer flips once alpha > 1/3.
/// - p2 (gold "B"): base favors B by 1; delta puts only +0.2 on W, flipping
///   the answer (wrongly) once alpha > 5.
/// - p3 (gold "A"): base and delta agree on A at every alpha.
///
/// Accuracy: 2/3 at alpha=0, 3/3 at alpha=0.5, 2/3 for alpha > 5 -- equal to
/// the delta-only decoder (`zero_base` with alpha=1).
pub fn reflection_fixture(dir: &Path) -> ReflectionFixture {
    const V: usize = 88;
    let eos = row(V, &[(0, 9.0)]);
    let stop_after_letters = |entries: &mut BTreeMap<String, Vec<f64>>| {
        for key in ["65", "66", "87"] {
            entries.insert(key.to_string(), eos.clone());
        }
    };

    let base = dir.join("base.json");
    let mut entries = BTreeMap::new();
    entries.insert("1".to_string(), row(V, &[(65, 2.0), (87, 1.0)]));
    entries.insert("2".to_string(), row(V, &[(66, 2.0), (87, 1.0)]));
    entries.insert("3".to_string(), row(V, &[(65, 3.0)]));
    stop_after_letters(&mut entries);
    write_table(&base, V, &[0], 1, eos.clone(), entries);

    let expert = dir.join("expert.json");
    let mut entries = BTreeMap::new();
    entries.insert("1".to_string(), row(V, &[(87, 3.0)]));
    entries.insert("2".to_string(), row(V, &[(87, 0.2)]));
    entries.insert("3".to_string(), row(V, &[(65, 3.0)]));
    stop_after_letters(&mut entries);
    write_table(&expert, V, &[0], 1, eos.clone(), entries);

    let amateur = dir.join("amateur.json");
    let mut entries = BTreeMap::new();
    for key in ["1", "2", "3"] {
        entries.insert(key.to_string(), row(V, &[]));
    }
    stop_after_letters(&mut entries);
    write_table(&amateur, V, &[0], 1, eos.clone(), entries);

    // flat base: combined logits at alpha=1 are exactly the delta
    let zero_base = dir.join("zero_base.json");
    write_table(&zero_base, V, &[0], 0, row(V, &[]), BTreeMap::new());

    let dataset = dir.join("dataset.jsonl");
    let lines = [
        json!({"id": "p1", "prompt": [1], "gold": "W", "kind": "free_text"}),
        json!({"id": "p2", "prompt": [2], "gold": "B", "kind": "free_text"}),
        json!({"id": "p3", "prompt": [3], "gold": "A", "kind": "free_text"}),
    ];
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&dataset, text).unwrap();

    ReflectionFixture { base, expert, amateur, zero_base, dataset }
}

/// One-problem fixture that emits "A" then EOS regardless of sampler; used
/// where only the run plumbing (not the answer) is under test.
pub fn trivial_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    const V: usize = 88;
    let model = dir.join("trivial.json");
    let mut entries = BTreeMap::new();
    entries.insert("65".to_string(), row(V, &[(0, 30.0)]));
    write_table(&model, V, &[0], 1, row(V, &[(65, 30.0)]), entries);
    let dataset = dir.join("trivial.jsonl");
    fs::write(
        &dataset,
        format!("{}\n", json!({"id": "t1", "prompt": [1], "gold": "A", "kind": "free_text"})),
    )
    .unwrap();
    (model, dataset)
}

/// File contents with any `"generated_at"` header line removed, for
/// byte-level reproducibility comparisons.
pub fn strip_timestamp(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|line| !line.trim_start().starts_with("\"generated_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}
