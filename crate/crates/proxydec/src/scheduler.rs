//! Per-step orchestration of the three backend calls and a discrete-event
//! cost simulator for comparing sequential vs. barrier-synchronized
//! concurrent schedules.
//!
//! Both strategies produce bitwise-identical logits; only timing differs.
//! The concurrent strategy fans the calls out across device groups and joins
//! at a barrier before sampling, the in-process analog of synchronizing
//! logits via collective communication.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::Session;
use crate::core::{LogitVector, TokenId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Sequential,
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Base = 0,
    Expert = 1,
    Amateur = 2,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Base, Role::Expert, Role::Amateur];
}

/// Immutable scheduling configuration. Backends mapped to the same device
/// group execute serially within a step; groups run in parallel under the
/// concurrent strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepScheduler {
    pub strategy: Strategy,
    /// backend name -> device-group id. Names absent from the map get a
    /// unique group of their own.
    #[serde(default)]
    pub group_assignment: BTreeMap<String, u32>,
}

impl StepScheduler {
    pub fn sequential() -> Self {
        Self { strategy: Strategy::Sequential, group_assignment: BTreeMap::new() }
    }

    pub fn concurrent(group_assignment: BTreeMap<String, u32>) -> Self {
        Self { strategy: Strategy::Concurrent, group_assignment }
    }

    fn group_of(&self, name: &str, fallback_idx: usize) -> u32 {
        match self.group_assignment.get(name) {
            Some(&g) => g,
            // unique fallback group well above any explicit assignment
            None => u32::MAX - fallback_idx as u32,
        }
    }
}

/// The three single-owner sessions of one decode request.
pub struct SessionTriple {
    pub base: Box<dyn Session>,
    pub expert: Box<dyn Session>,
    pub amateur: Box<dyn Session>,
}

impl SessionTriple {
    fn name(&self, role: Role) -> String {
        match role {
            Role::Base => self.base.backend_name().to_string(),
            Role::Expert => self.expert.backend_name().to_string(),
            Role::Amateur => self.amateur.backend_name().to_string(),
        }
    }
}

/// Extends all three sessions with `new_tokens` and returns the three
/// next-token logit vectors `(base, expert, amateur)`. Returns only after
/// all three calls complete; the result is independent of completion order.
pub fn run_step(
    scheduler: &StepScheduler,
    sessions: &mut SessionTriple,
    new_tokens: &[TokenId],
) -> Result<(LogitVector, LogitVector, LogitVector)> {
    match scheduler.strategy {
        Strategy::Sequential => {
            let zb = sessions.base.extend_and_score(new_tokens)?;
            let ze = sessions.expert.extend_and_score(new_tokens)?;
            let za = sessions.amateur.extend_and_score(new_tokens)?;
            Ok((zb, ze, za))
        }
        Strategy::Concurrent => run_step_concurrent(scheduler, sessions, new_tokens),
    }
}

fn run_step_concurrent(
    scheduler: &StepScheduler,
    sessions: &mut SessionTriple,
    new_tokens: &[TokenId],
) -> Result<(LogitVector, LogitVector, LogitVector)> {
    // bucket roles by group, preserving role order within a group
    let mut groups: BTreeMap<u32, Vec<Role>> = BTreeMap::new();
    for (idx, role) in Role::ALL.into_iter().enumerate() {
        let group = scheduler.group_of(&sessions.name(role), idx);
        groups.entry(group).or_default().push(role);
    }

    let SessionTriple { base, expert, amateur } = sessions;
    let mut slots: [Option<&mut Box<dyn Session>>; 3] =
        [Some(base), Some(expert), Some(amateur)];

    let mut results: Vec<(Role, Result<LogitVector>)> = Vec::with_capacity(3);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (_, roles) in groups {
            let members: Vec<(Role, &mut Box<dyn Session>)> = roles
                .into_iter()
                .map(|role| (role, slots[role as usize].take().expect("role assigned once")))
                .collect();
            handles.push(scope.spawn(move || {
                members
                    .into_iter()
                    .map(|(role, session)| (role, session.extend_and_score(new_tokens)))
                    .collect::<Vec<_>>()
            }));
        }
        // the join below is the per-step barrier
        for handle in handles {
            results.extend(handle.join().expect("scheduler worker panicked"));
        }
    });

    results.sort_by_key(|(role, _)| *role);
    let mut out = Vec::with_capacity(3);
    for (_, result) in results {
        out.push(result?);
    }
    let za = out.pop().unwrap();
    let ze = out.pop().unwrap();
    let zb = out.pop().unwrap();
    Ok((zb, ze, za))
}

/// Per-backend cost model abstracting hardware into milliseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendCost {
    pub name: String,
    /// ms per prompt token, paid once before step 1.
    #[serde(default)]
    pub prefill_cost: f64,
    /// ms per decode step; must be positive.
    pub decode_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyModel {
    pub backends: Vec<BackendCost>,
    /// ms per step spent synchronizing logits before sampling.
    #[serde(default)]
    pub barrier_cost: f64,
}

impl LatencyModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read latency model '{}': {e}", path.display()))
        })?;
        let model: Self = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("malformed latency model '{}': {e}", path.display()))
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backends.is_empty() {
            return Err(Error::Config("latency model has no backends".into()));
        }
        for b in &self.backends {
            if !(b.decode_cost > 0.0) || !b.decode_cost.is_finite() {
                return Err(Error::Config(format!(
                    "decode_cost for '{}' must be positive and finite",
                    b.name
                )));
            }
            if b.prefill_cost < 0.0 || !b.prefill_cost.is_finite() {
                return Err(Error::Config(format!(
                    "prefill_cost for '{}' must be non-negative and finite",
                    b.name
                )));
            }
        }
        if self.barrier_cost < 0.0 || !self.barrier_cost.is_finite() {
            return Err(Error::Config("barrier_cost must be non-negative and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub backend: String,
    /// 0 = prefill, 1.. = decode steps.
    pub step: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub group: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub events: Vec<ScheduleEvent>,
    pub makespan_ms: f64,
    pub per_group_idle_fraction: BTreeMap<u32, f64>,
}

/// Deterministic event timeline under the cost model. Sequential per-step
/// duration is the sum of decode costs plus the barrier; concurrent is the
/// max over groups of the within-group sums, plus the barrier.
pub fn simulate_timeline(
    latency: &LatencyModel,
    scheduler: &StepScheduler,
    prompt_len: usize,
    steps: usize,
) -> Result<ScheduleTrace> {
    latency.validate()?;
    if steps < 1 {
        return Err(Error::Domain("simulation needs at least one step".into()));
    }

    let groups: Vec<u32> = latency
        .backends
        .iter()
        .enumerate()
        .map(|(idx, b)| scheduler.group_of(&b.name, idx))
        .collect();

    let mut events = Vec::new();
    let push = |events: &mut Vec<ScheduleEvent>, backend: &BackendCost, step, start, dur, group| {
        if dur > 0.0 {
            events.push(ScheduleEvent {
                backend: backend.name.clone(),
                step,
                start_ms: start,
                end_ms: start + dur,
                group,
            });
        }
        start + dur
    };

    let mut now = 0.0f64;
    match scheduler.strategy {
        Strategy::Sequential => {
            for (b, &g) in latency.backends.iter().zip(&groups) {
                now = push(&mut events, b, 0, now, b.prefill_cost * prompt_len as f64, g);
            }
            for step in 1..=steps {
                for (b, &g) in latency.backends.iter().zip(&groups) {
                    now = push(&mut events, b, step, now, b.decode_cost, g);
                }
                now += latency.barrier_cost;
            }
        }
        Strategy::Concurrent => {
            let phase = |events: &mut Vec<ScheduleEvent>,
                             now: f64,
                             step: usize,
                             cost: &dyn Fn(&BackendCost) -> f64| {
                let mut group_cursor: BTreeMap<u32, f64> = BTreeMap::new();
                for (b, &g) in latency.backends.iter().zip(&groups) {
                    let start = *group_cursor.get(&g).unwrap_or(&now);
                    let end = push(events, b, step, start, cost(b), g);
                    group_cursor.insert(g, end);
                }
                group_cursor.values().cloned().fold(now, f64::max)
            };
            now = phase(&mut events, now, 0, &|b| b.prefill_cost * prompt_len as f64);
            for step in 1..=steps {
                now = phase(&mut events, now, step, &|b| b.decode_cost);
                now += latency.barrier_cost;
            }
        }
    }
    let _ = now;

    let min_start = events.iter().map(|e| e.start_ms).fold(f64::INFINITY, f64::min);
    let max_end = events.iter().map(|e| e.end_ms).fold(f64::NEG_INFINITY, f64::max);
    let makespan_ms = if events.is_empty() { 0.0 } else { max_end - min_start };

    let mut busy: BTreeMap<u32, f64> = groups.iter().map(|&g| (g, 0.0)).collect();
    for e in &events {
        *busy.get_mut(&e.group).unwrap() += e.end_ms - e.start_ms;
    }
    let per_group_idle_fraction = busy
        .into_iter()
        .map(|(g, b)| (g, if makespan_ms > 0.0 { 1.0 - b / makespan_ms } else { 0.0 }))
        .collect();

    Ok(ScheduleTrace { events, makespan_ms, per_group_idle_fraction })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdleRow {
    pub group: u32,
    pub busy_ms: f64,
    pub idle_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdleReport {
    pub makespan_ms: f64,
    pub rows: Vec<IdleRow>,
}

/// Per-group utilization: idle fraction = 1 - busy / makespan.
pub fn idle_report(trace: &ScheduleTrace) -> IdleReport {
    let mut busy: BTreeMap<u32, f64> = trace.per_group_idle_fraction.keys().map(|&g| (g, 0.0)).collect();
    for e in &trace.events {
        *busy.entry(e.group).or_insert(0.0) += e.end_ms - e.start_ms;
    }
    let rows = busy
        .into_iter()
        .map(|(group, busy_ms)| IdleRow {
            group,
            busy_ms,
            idle_fraction: if trace.makespan_ms > 0.0 { 1.0 - busy_ms / trace.makespan_ms } else { 0.0 },
        })
        .collect();
    IdleReport { makespan_ms: trace.makespan_ms, rows }
}

impl IdleReport {
    /// Plot-ready CSV table; fractions to 4 decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,busy_ms,idle_fraction\n");
        for row in &self.rows {
            out.push_str(&format!("{},{:.4},{:.4}\n", row.group, row.busy_ms, row.idle_fraction));
        }
        out
    }
}
