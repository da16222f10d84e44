//! JSON verdict reports and JSONL trace dumps.
//!
//! Both formats are deterministic: object keys are sorted and nothing
//! depends on wall-clock time unless timing is asked for explicitly.

use std::io::{self, Write};
use std::ops::ControlFlow;

use serde_json::{json, Map, Value};

use crate::event::TraceEvent;

use super::engine::{explore, Scenario, State, Step, Visibility};
use super::formula::Env;
use super::lemmas::{CheckResult, LemmaKind};

pub const TOOL: &str = "findmy-verif";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn strings<T: ToString>(xs: impl IntoIterator<Item = T>) -> Vec<String> {
    xs.into_iter().map(|x| x.to_string()).collect()
}

fn event_json(e: &TraceEvent) -> Value {
    json!({ "kind": e.kind.name(), "params": strings(&e.params), "time": e.time })
}

fn step_json(i: usize, s: &Step) -> Value {
    json!({
        "step": i + 1,
        "rule": s.rule.name(),
        "actions": s.actions.iter().map(|(k, ps)| json!({ "kind": k.name(), "params": strings(ps) })).collect::<Vec<_>>(),
        "consumed": strings(&s.consumed),
        "read": strings(&s.read),
        "produced": strings(&s.produced),
        "outs": strings(&s.outs),
    })
}

fn assignment_json(env: &Env) -> Value {
    Value::Object(
        env.iter()
            .map(|(k, v)| (k.clone(), Value::String(v.to_string())))
            .collect::<Map<_, _>>(),
    )
}

/// The trace part of a counterexample or witness.
pub fn trace_json(state: &State) -> Value {
    json!({
        "steps": state.steps.iter().enumerate().map(|(i, s)| step_json(i, s)).collect::<Vec<_>>(),
        "events": state.events.iter().map(event_json).collect::<Vec<_>>(),
        "adversary_knowledge": strings(state.kb.terms()),
    })
}

/// A self-contained report for one lemma: bounds, theory and tool version
/// are embedded so the verdict can be reproduced from the report alone.
pub fn verdict_report(r: &CheckResult, include_timing: bool) -> Value {
    let sc = &r.scenario;
    let mut bounds = serde_json::to_value(&sc.bounds).expect("bounds serialise");
    bounds["reveals"] = json!(strings(sc.reveals.iter().map(|k| k.name())));
    let mut out = json!({
        "tool": TOOL,
        "version": VERSION,
        "lemma": r.lemma.name,
        "description": r.lemma.description,
        "kind": r.lemma.kind,
        "formula": r.lemma.formula.to_string(),
        "verdict": r.verdict,
        "expected": r.lemma.expect,
        "matches_expectation": r.matches_expectation(),
        "bounds": bounds,
        "theory": sc.theory,
        "symmetry_reduction": sc.symmetry_reduction,
        "traces_explored": r.stats.maximal_traces,
        "nodes_explored": r.stats.nodes,
        "prefixes_evaluated": r.evaluated,
        "annotation": r.annotation(),
    });
    if let Some(ev) = &r.evidence {
        let key = match r.lemma.kind {
            LemmaKind::AllTraces => "counterexample",
            LemmaKind::ExistsTrace => "witness",
        };
        out[key] = json!({
            "trace": trace_json(&ev.trace),
            "assignment": assignment_json(&ev.assignment),
            "proofs": ev.proofs.iter().map(|(t, p)| json!({ "term": t.to_string(), "tree": p.to_json() })).collect::<Vec<_>>(),
        });
    }
    if include_timing {
        out["elapsed_ms"] = json!(r.elapsed.as_millis() as u64);
    }
    out
}

/// Aggregate report over a lemma suite, in the order given.
pub fn suite_report(results: &[CheckResult], include_timing: bool) -> Value {
    let regressions: Vec<&str> = results
        .iter()
        .filter(|r| !r.matches_expectation())
        .map(|r| r.lemma.name.as_str())
        .collect();
    json!({
        "tool": TOOL,
        "version": VERSION,
        "results": results.iter().map(|r| verdict_report(r, include_timing)).collect::<Vec<_>>(),
        "summary": {
            "total": results.len(),
            "matching": results.len() - regressions.len(),
            "regressions": regressions,
        },
    })
}

/// JSONL records for one trace: one per step, or a single record with a
/// null rule for the empty trace.
pub fn trace_records(index: usize, state: &State) -> Vec<Value> {
    if state.steps.is_empty() {
        return vec![json!({
            "trace": index,
            "step": 0,
            "rule": null,
            "event": null,
            "params": [],
            "actions": [],
            "consumed": [],
            "produced": [],
        })];
    }
    let mut out = Vec::with_capacity(state.steps.len());
    for (i, s) in state.steps.iter().enumerate() {
        let first = s.actions.first();
        out.push(json!({
            "trace": index,
            "step": i + 1,
            "rule": s.rule.name(),
            "event": first.map(|(k, _)| k.name()),
            "params": first.map(|(_, ps)| strings(ps)).unwrap_or_default(),
            "actions": s.actions.iter().map(|(k, ps)| json!({ "kind": k.name(), "params": strings(ps) })).collect::<Vec<_>>(),
            "consumed": strings(&s.consumed),
            "produced": strings(&s.produced),
        }));
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DumpStats {
    pub traces: usize,
    /// Steps over all traces, counting the empty trace as one record.
    pub records: usize,
}

/// Writes every maximal trace within the scenario's bounds, without
/// partial-order reduction, as JSONL. Traces are streamed as they are found.
pub fn dump_traces<W: Write + ?Sized>(scenario: &Scenario, out: &mut W) -> io::Result<DumpStats> {
    let mut stats = DumpStats::default();
    let mut failure = None;
    explore(scenario, &Visibility::all(), |st, maximal| {
        if !maximal {
            return ControlFlow::Continue(());
        }
        for rec in trace_records(stats.traces, st) {
            let written = serde_json::to_writer(&mut *out, &rec)
                .map_err(io::Error::from)
                .and_then(|_| out.write_all(b"\n"));
            if let Err(e) = written {
                failure = Some(e);
                return ControlFlow::Break(());
            }
            stats.records += 1;
        }
        stats.traces += 1;
        ControlFlow::Continue(())
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(stats),
    }
}
