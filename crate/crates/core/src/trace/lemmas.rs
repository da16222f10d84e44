//! The security lemma suite and the bounded checker that decides it.

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adversary::{ProofTree, RevealKind};
use crate::term::{Term, Theory};

use super::engine::{explore, Bounds, ExploreStats, Scenario, State, Visibility};
use super::formula::{Env, Formula, FormulaError, TraceView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaKind {
    /// The formula must hold on every trace.
    AllTraces,
    /// Some trace must satisfy the formula.
    ExistsTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Violated,
}

#[derive(Clone, Debug)]
pub struct Lemma {
    pub name: String,
    pub kind: LemmaKind,
    pub source: String,
    pub formula: Formula,
    /// Reveal rules active while checking, unless the bounds override them.
    pub reveals: BTreeSet<RevealKind>,
    pub expect: Expectation,
    /// `false` when no unbounded proof of the lemma is known, so a bounded
    /// verdict is all that can be claimed.
    pub unbounded_result: bool,
    pub description: String,
}

impl Lemma {
    pub fn new(
        name: &str,
        kind: LemmaKind,
        source: &str,
        reveals: &[RevealKind],
        description: &str,
    ) -> Result<Lemma, FormulaError> {
        let formula = Formula::parse(source)?;
        Ok(Lemma {
            name: name.to_string(),
            kind,
            source: source.to_string(),
            formula,
            reveals: reveals.iter().copied().collect(),
            expect: Expectation::Holds,
            unbounded_result: true,
            description: description.to_string(),
        })
    }

    pub fn expecting(mut self, e: Expectation) -> Self {
        self.expect = e;
        self
    }

    fn bounded_only(mut self) -> Self {
        self.unbounded_result = false;
        self
    }

    /// Steps the checker must keep ordered for this formula.
    pub fn visibility(&self) -> Visibility {
        Visibility {
            kinds: self.formula.event_kinds(),
            outs: self.formula.k_time_ordered(),
            every_step: false,
        }
    }
}

use RevealKind::{Di, Sk0, Ski, D0};

const SANITY: &str = "Ex L O d0 SK0 loc df p tF #k #j #i.
    Ok_s(L, O, d0, SK0) @ #k & Floc(loc, df, p) @ #j & OwnerDecrypt(O, L, loc, tF) @ #i
    & #k < #j & #j < #i";

const EPOCHS_START1: &str = "All L O d0 SK0 d1 SK1 #i.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i
    ==> Ex #j. KeyEst(O, L, d0, SK0) @ #j & #j < #i";

const EPOCHS_START2: &str = "All L O d0 SK0 d SK #i.
    LPFS2(L, O, d0, SK0, d, SK) @ #i
    ==> Ex d1 SK1 #j. LPFS1(L, O, d0, SK0, d1, SK1) @ #j & #j < #i";

const EPOCHS_END: &str = "All loc df p #i.
    Floc(loc, df, p) @ #i
    ==> (Ex L O d0 SK0 d SK #j. LPFS1(L, O, d0, SK0, d, SK) @ #j & p = pk(d) & #j < #i)
      | (Ex L O d0 SK0 d SK #j. LPFS2(L, O, d0, SK0, d, SK) @ #j & p = pk(d) & #j < #i)";

const D0_SEC: &str = "All L O d0 SK0 d1 SK1 #i.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i
    ==> (not (Ex #j. K(d0) @ #j)) | (Ex #k. LtkReveal_d0(O, L, d0) @ #k)";

const D0_SEC_NO_EXCEPTION: &str = "All L O d0 SK0 d1 SK1 #i.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i
    ==> not (Ex #j. K(d0) @ #j)";

const SK0_SEC: &str = "All L O d0 SK0 d1 SK1 #i.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i
    ==> (not (Ex #j. K(SK0) @ #j)) | (Ex #k. LtkReveal_SK0(O, L, SK0) @ #k)";

const DI_SEC: &str = "All L O d0 SK0 d1 SK1 d SK #i #j.
    LPFS2(L, O, d0, SK0, d, SK) @ #i & LPFS1(L, O, d0, SK0, d1, SK1) @ #j & #j < #i
    ==> (not (Ex #r. K(d) @ #r))
      | (Ex #k #m. LtkReveal_d0(O, L, d0) @ #k & LtkReveal_SK0(O, L, SK0) @ #m)";

const SKI_SEC: &str = "All L O d0 SK0 d1 SK1 d SK #i #j.
    LPFS2(L, O, d0, SK0, d, SK) @ #i & LPFS1(L, O, d0, SK0, d1, SK1) @ #j & #j < #i
    ==> (not (Ex #r. K(SK) @ #r))
      | (Ex #k. LtkReveal_SK0(O, L, SK0) @ #k)";

const PFS_INIT_D: &str = "All L O d0 SK0 d1 SK1 d SK #i #j #r.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i & LPFS2(L, O, d0, SK0, d, SK) @ #j & #i < #j & K(d1) @ #r
    ==> (not (Ex #s. K(d) @ #s))
      | (Ex #k. Reveal_di(O, L, d) @ #k)
      | (Ex #k #m. LtkReveal_d0(O, L, d0) @ #k & LtkReveal_SK0(O, L, SK0) @ #m)";

const PFS_D: &str = "All L O d0 SK0 d1 SK1 d SK #i #j #r.
    LPFS2(L, O, d0, SK0, d1, SK1) @ #i & LPFS2(L, O, d0, SK0, d, SK) @ #j & #i < #j & K(d1) @ #r
    ==> (not (Ex #s. K(d) @ #s))
      | (Ex #k. Reveal_di(O, L, d) @ #k)
      | (Ex #k #m. LtkReveal_d0(O, L, d0) @ #k & LtkReveal_SK0(O, L, SK0) @ #m)";

const PFS_INIT_SK: &str = "All L O d0 SK0 d1 SK1 d SK #i #j #r.
    LPFS1(L, O, d0, SK0, d1, SK1) @ #i & LPFS2(L, O, d0, SK0, d, SK) @ #j & #i < #j & K(SK1) @ #r
    ==> (not (Ex #s. K(SK) @ #s))
      | (Ex #k. LtkReveal_SK0(O, L, SK0) @ #k)";

const PFS_SK: &str = "All L O d0 SK0 d1 SK1 d SK #i #j #r.
    LPFS2(L, O, d0, SK0, d1, SK1) @ #i & LPFS2(L, O, d0, SK0, d, SK) @ #j & #i < #j & K(SK1) @ #r
    ==> (not (Ex #s. K(SK) @ #s))
      | (Ex #k. LtkReveal_SK0(O, L, SK0) @ #k)";

fn lemma(name: &str, kind: LemmaKind, src: &str, reveals: &[RevealKind], desc: &str) -> Lemma {
    Lemma::new(name, kind, src, reveals, desc)
        .unwrap_or_else(|e| panic!("built-in lemma {name}: {e}"))
}

/// The twelve security lemmas of the protocol model.
pub fn builtin_lemmas() -> Vec<Lemma> {
    use LemmaKind::*;
    vec![
        lemma("sanity_check", ExistsTrace, SANITY, &[], "Is the protocol executable at all?"),
        lemma(
            "epochs_start1",
            AllTraces,
            EPOCHS_START1,
            &[],
            "The first epoch of an LTA is preceded by the key establishment of its master beacon key.",
        ),
        lemma(
            "epochs_start2",
            AllTraces,
            EPOCHS_START2,
            &[],
            "For any later epoch, an LPFS1 event must have happened beforehand.",
        ),
        lemma(
            "epochs_end",
            AllTraces,
            EPOCHS_END,
            &[],
            "Every finder report targets a public key announced by some epoch of an LTA.",
        ),
        lemma(
            "d0_sec",
            AllTraces,
            D0_SEC,
            &[D0, Sk0],
            "d0 is known only to the owner and the LTA unless it was revealed.",
        ),
        lemma(
            "SK0_sec",
            AllTraces,
            SK0_SEC,
            &[D0, Sk0],
            "SK0 is known only to the owner and the LTA unless it was revealed.",
        ),
        lemma(
            "di_sec",
            AllTraces,
            DI_SEC,
            &[D0, Sk0],
            "Any later private key d_i stays secret unless both d0 and SK0 were revealed.",
        ),
        lemma(
            "ski_sec",
            AllTraces,
            SKI_SEC,
            &[D0, Sk0],
            "Any later symmetric key SK_i stays secret unless SK0 was revealed.",
        )
        .bounded_only(),
        lemma(
            "pfs_init_d",
            AllTraces,
            PFS_INIT_D,
            &[D0, Sk0, Di],
            "Even if d_1 is leaked, later private keys stay secret unless revealed themselves or both master secrets leak.",
        ),
        lemma(
            "pfs_d",
            AllTraces,
            PFS_D,
            &[D0, Sk0, Di],
            "Even if an arbitrary d_i is leaked, later private keys stay secret unless revealed themselves or both master secrets leak.",
        ),
        lemma(
            "pfs_init_sk",
            AllTraces,
            PFS_INIT_SK,
            &[D0, Sk0],
            "Even if SK_1 is leaked through the adversary's observations, later SK_i stay secret unless SK0 leaks.",
        ),
        lemma(
            "pfs_sk",
            AllTraces,
            PFS_SK,
            &[D0, Sk0],
            "Even if an arbitrary SK_i is leaked through the adversary's observations, later SK_j stay secret unless SK0 leaks.",
        )
        .bounded_only(),
    ]
}

/// Deliberately broken variants that the checker must refute.
pub fn control_lemmas() -> Vec<Lemma> {
    use LemmaKind::*;
    vec![
        lemma(
            "d0_sec_no_exception",
            AllTraces,
            D0_SEC_NO_EXCEPTION,
            &[D0, Sk0],
            "d0_sec without its reveal exception; Reveal_d0 makes it false.",
        )
        .expecting(Expectation::Violated),
        lemma(
            "pfs_init_sk_ski_leak",
            AllTraces,
            PFS_INIT_SK,
            &[D0, Sk0, Ski],
            "pfs_init_sk with Reveal_ski enabled: SK_1 leaks and the hash chain gives away every later SK_i.",
        )
        .expecting(Expectation::Violated),
    ]
}

/// Looks a lemma up among the built-in and control lemmas.
pub fn find_lemma(name: &str) -> Option<Lemma> {
    builtin_lemmas()
        .into_iter()
        .chain(control_lemmas())
        .find(|l| l.name == name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// No trace within the bounds violates the formula.
    HoldsAtBound,
    Counterexample,
    WitnessFound,
    /// No trace within the bounds satisfies the formula.
    NoWitness,
}

impl Verdict {
    /// Whether the lemma, read as a claim about the protocol, is upheld.
    pub fn holds(self) -> bool {
        matches!(self, Verdict::HoldsAtBound | Verdict::WitnessFound)
    }
}

/// A trace together with the variable assignment that decided the verdict.
#[derive(Clone, Debug)]
pub struct Evidence {
    pub trace: State,
    pub assignment: Env,
    /// Deduction proofs for the `K` atoms that are ground under the
    /// assignment and derivable at the end of the trace.
    pub proofs: Vec<(Term, ProofTree)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckOptions {
    pub theory: Theory,
    pub symmetry_reduction: bool,
}

impl CheckOptions {
    pub fn new() -> Self {
        CheckOptions {
            theory: Theory::default(),
            symmetry_reduction: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub lemma: Lemma,
    pub scenario: Scenario,
    pub verdict: Verdict,
    pub evidence: Option<Evidence>,
    pub stats: ExploreStats,
    /// Nodes at which the formula was evaluated.
    pub evaluated: u64,
    pub elapsed: Duration,
}

impl CheckResult {
    pub fn matches_expectation(&self) -> bool {
        match self.lemma.expect {
            Expectation::Holds => self.verdict.holds(),
            Expectation::Violated => !self.verdict.holds(),
        }
    }

    /// Caveat attached to verdicts that are weaker than an unbounded proof.
    pub fn annotation(&self) -> Option<&'static str> {
        (!self.lemma.unbounded_result && self.verdict == Verdict::HoldsAtBound).then_some(
            "no unbounded result exists for this lemma; verdict covers only the explored bound",
        )
    }
}

/// The scenario a lemma is checked in: explicit reveal bounds win over the
/// lemma's own reveal set.
pub fn scenario_for(lemma: &Lemma, bounds: &Bounds, opts: &CheckOptions) -> Scenario {
    let reveals = bounds
        .reveals
        .clone()
        .unwrap_or_else(|| lemma.reveals.clone());
    let mut s = Scenario::new(bounds.clone(), reveals);
    s.theory = opts.theory;
    s.symmetry_reduction = opts.symmetry_reduction;
    s
}

/// Decides `lemma` over every trace prefix reachable within `bounds`.
///
/// Prefixes matter: a property such as "d0 stays secret unless revealed"
/// may fail mid-trace and be repaired later only by an unrelated reveal.
pub fn check_lemma(lemma: &Lemma, bounds: &Bounds, opts: &CheckOptions) -> CheckResult {
    let start = Instant::now();
    let scenario = scenario_for(lemma, bounds, opts);
    let vis = lemma.visibility();
    let depth = scenario.bounds.depth;
    let mut evidence = None;
    let mut evaluated = 0u64;
    let stats = explore(&scenario, &vis, |state, _| {
        // a step that is invisible and sends nothing leaves every atom's
        // truth value where its parent had it
        if let Some(last) = state.steps.last() {
            if !vis.is_visible(last) && last.outs.is_empty() {
                return ControlFlow::Continue(());
            }
        }
        evaluated += 1;
        let view = TraceView::new(state, scenario.theory, depth);
        let found = match lemma.kind {
            LemmaKind::AllTraces => view.falsify(&lemma.formula),
            LemmaKind::ExistsTrace => view.satisfy(&lemma.formula),
        };
        match found {
            Some(assignment) => {
                let proofs = view.knowledge_proofs(&lemma.formula, &assignment);
                evidence = Some(Evidence {
                    trace: state.clone(),
                    assignment,
                    proofs,
                });
                ControlFlow::Break(())
            }
            None => ControlFlow::Continue(()),
        }
    });
    let verdict = match (lemma.kind, evidence.is_some()) {
        (LemmaKind::AllTraces, false) => Verdict::HoldsAtBound,
        (LemmaKind::AllTraces, true) => Verdict::Counterexample,
        (LemmaKind::ExistsTrace, true) => Verdict::WitnessFound,
        (LemmaKind::ExistsTrace, false) => Verdict::NoWitness,
    };
    CheckResult {
        lemma: lemma.clone(),
        scenario,
        verdict,
        evidence,
        stats,
        evaluated,
        elapsed: start.elapsed(),
    }
}

/// Checks `lemmas` on up to `jobs` threads. Results come back in input
/// order whatever the scheduling.
pub fn check_suite(
    lemmas: &[Lemma],
    bounds: &Bounds,
    opts: &CheckOptions,
    jobs: usize,
) -> Vec<CheckResult> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CheckResult>>> = lemmas.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, lemmas.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(l) = lemmas.get(i) else { break };
                let r = check_lemma(l, bounds, opts);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot")
                .expect("every lemma checked")
        })
        .collect()
}
