//! Bounded trace exploration and lemma checking.

pub mod engine;
pub mod formula;
pub mod lemmas;
pub mod report;

pub use engine::{enumerate_traces, explore, Bounds, ExploreStats, Scenario, State, Visibility};
pub use formula::{Formula, FormulaError, TraceView};
pub use lemmas::{
    builtin_lemmas, check_lemma, check_suite, control_lemmas, find_lemma, scenario_for,
    CheckOptions, CheckResult, Expectation, Lemma, LemmaKind, Verdict,
};
