//! Dolev-Yao intruder: what it has seen, what it has been handed by key
//! reveals, and what it can deduce from that.
//!
//! Deduction is bounded. The depth of a derivation is the height of its proof
//! tree, where known terms and public names sit at height 0 and every
//! analysis or synthesis step adds one.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::event::{EventKind, TraceEvent};
use crate::term::{Symbol, Term, Theory};

/// Everything the intruder has observed, in normal form and in order of
/// arrival. Public names are implicitly known and never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    theory: Theory,
    terms: Vec<Term>,
    /// Shared between clones until one of them observes something new.
    index: Arc<Index>,
}

impl KnowledgeBase {
    pub fn new(theory: Theory) -> Self {
        KnowledgeBase {
            theory,
            terms: Vec::new(),
            index: Arc::default(),
        }
    }

    pub fn theory(&self) -> Theory {
        self.theory
    }

    /// Adds `msg` (normalised first). Returns whether it was new.
    pub fn observe(&mut self, msg: &Term) -> bool {
        let t = self.theory.normalize(msg);
        if self.index.known.contains(&t) {
            return false;
        }
        Arc::make_mut(&mut self.index).add(&t);
        self.terms.push(t);
        true
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.index.known.contains(&self.theory.normalize(t))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// The knowledge base as it was after the first `n` observations.
    pub fn prefix(&self, n: usize) -> KnowledgeBase {
        if n >= self.terms.len() {
            return self.clone();
        }
        let mut kb = KnowledgeBase::new(self.theory);
        for t in &self.terms[..n] {
            kb.observe(t);
        }
        kb
    }

    pub fn is_subset_of(&self, other: &KnowledgeBase) -> bool {
        self.index.known.is_subset(&other.index.known)
    }

    /// A deduction engine over this knowledge base that reuses its tables.
    pub fn deriver(&self) -> Deriver<'_> {
        Deriver {
            theory: self.theory,
            kb: &self.terms,
            index: Cow::Borrowed(&self.index),
            memo: HashMap::new(),
        }
    }

    pub fn can_derive(&self, target: &Term, depth_bound: u32) -> Derivation {
        self.deriver().derive(target, depth_bound)
    }
}

/// How a proof-tree node was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    /// The term is in the knowledge base.
    Known,
    /// A public name.
    Public,
    /// Pair construction from two premises.
    Pair,
    /// Application of a constructor to the premises.
    Apply(Symbol),
    Fst,
    Snd,
    /// `sdec(c, k)`; premises are `[c, k]`.
    Sdec,
    /// `AEAD_dec(k, c)`; premises are `[k, c]`.
    AeadDec,
    /// `AEADauthdec(k, c, aad)`; premises are `[k, c, aad]`.
    AeadAuthDec,
}

impl Step {
    fn name(self) -> String {
        match self {
            Step::Known => "known".into(),
            Step::Public => "public".into(),
            Step::Pair => "pair".into(),
            Step::Apply(s) => format!("apply {s}"),
            Step::Fst => "fst".into(),
            Step::Snd => "snd".into(),
            Step::Sdec => "sdec".into(),
            Step::AeadDec => "AEAD_dec".into(),
            Step::AeadAuthDec => "AEADauthdec".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofTree {
    pub conclusion: Term,
    pub step: Step,
    pub premises: Vec<ProofTree>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("proof step '{step}' does not yield {conclusion}: {reason}")]
pub struct ReplayError {
    pub step: String,
    pub conclusion: String,
    pub reason: &'static str,
}

impl ProofTree {
    fn leaf(t: Term, step: Step) -> Self {
        ProofTree {
            conclusion: t,
            step,
            premises: Vec::new(),
        }
    }

    pub fn height(&self) -> u32 {
        self.premises
            .iter()
            .map(|p| p.height() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(ProofTree::size).sum::<usize>()
    }

    /// Re-checks every node against `kb` and returns the normalised root.
    pub fn replay(&self, kb: &KnowledgeBase) -> Result<Term, ReplayError> {
        let th = kb.theory();
        let fail = |reason| ReplayError {
            step: self.step.name(),
            conclusion: self.conclusion.to_string(),
            reason,
        };
        let got: Vec<Term> = self
            .premises
            .iter()
            .map(|p| p.replay(kb))
            .collect::<Result<_, _>>()?;
        let arity_ok = match self.step {
            Step::Known | Step::Public => got.is_empty(),
            Step::Pair | Step::Sdec | Step::AeadDec => got.len() == 2,
            Step::AeadAuthDec => got.len() == 3,
            Step::Fst | Step::Snd => got.len() == 1,
            Step::Apply(s) => s.is_constructor() && got.len() == s.arity(),
        };
        if !arity_ok {
            return Err(fail("wrong premise count"));
        }
        let result = match self.step {
            Step::Known => {
                if !kb.contains(&self.conclusion) {
                    return Err(fail("not in the knowledge base"));
                }
                th.normalize(&self.conclusion)
            }
            Step::Public => match &self.conclusion {
                Term::Public(_) => self.conclusion.clone(),
                _ => return Err(fail("not a public name")),
            },
            Step::Pair => Term::pair(got[0].clone(), got[1].clone()),
            Step::Apply(s) => th.normalize(&Term::app(s, got).map_err(|_| fail("arity"))?),
            Step::Fst | Step::Snd | Step::Sdec | Step::AeadDec | Step::AeadAuthDec => {
                let (sym, args) = match self.step {
                    Step::Fst => (Symbol::Fst, got),
                    Step::Snd => (Symbol::Snd, got),
                    Step::Sdec => (Symbol::Sdec, got),
                    Step::AeadDec => (Symbol::AeadDec, got),
                    _ => (Symbol::AeadAuthDec, got),
                };
                let r = th.normalize(&Term::app(sym, args).map_err(|_| fail("arity"))?);
                if r.head() == Some(sym) {
                    return Err(fail("destructor does not reduce"));
                }
                r
            }
        };
        if result != th.normalize(&self.conclusion) {
            return Err(fail("result differs from the stated conclusion"));
        }
        Ok(result)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "term": self.conclusion.to_string(),
            "step": self.step.name(),
            "premises": self.premises.iter().map(ProofTree::to_json).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for ProofTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &ProofTree, indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            writeln!(
                f,
                "{:indent$}{}  [{}]",
                "",
                t.conclusion,
                t.step.name(),
                indent = indent
            )?;
            for p in &t.premises {
                go(p, indent + 2, f)?;
            }
            Ok(())
        }
        go(self, 0, f)
    }
}

/// Outcome of a bounded derivability query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub target: Term,
    pub depth_bound: u32,
    pub proof: Option<ProofTree>,
}

impl Derivation {
    pub fn derivable(&self) -> bool {
        self.proof.is_some()
    }
}

/// Top-down bounded search, memoised on `(term, remaining depth)`.
///
/// Synthesis only ever builds subterms of the goal (plus the swapped
/// orientation of a shared secret), and analysis only ever opens subterms of
/// the knowledge base, so the search space is finite for every bound.
pub struct Deriver<'a> {
    theory: Theory,
    kb: &'a [Term],
    index: Cow<'a, Index>,
    memo: HashMap<(Term, u32), Option<ProofTree>>,
}

/// Lookup tables over a knowledge base, grown one observation at a time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Index {
    known: BTreeSet<Term>,
    subterms: BTreeSet<Term>,
    /// Subterms of the knowledge base keyed by the component that analysis
    /// would extract from them.
    openers: HashMap<Term, Vec<Term>>,
}

impl Index {
    fn add(&mut self, t: &Term) {
        self.known.insert(t.clone());
        let mut subs = BTreeSet::new();
        t.collect_subterms(&mut subs);
        for s in subs {
            if self.subterms.contains(&s) {
                continue;
            }
            match &s {
                Term::Pair(a, b) => {
                    self.openers
                        .entry((**a).clone())
                        .or_default()
                        .push(s.clone());
                    self.openers
                        .entry((**b).clone())
                        .or_default()
                        .push(s.clone());
                }
                Term::App(_) => match s.as_app() {
                    Some((Symbol::Senc, [m, _])) => {
                        self.openers.entry(m.clone()).or_default().push(s.clone())
                    }
                    Some((Symbol::AeadEnc, [_, pt, _])) => {
                        self.openers.entry(pt.clone()).or_default().push(s.clone())
                    }
                    _ => {}
                },
                _ => {}
            }
            self.subterms.insert(s);
        }
    }
}

impl<'a> Deriver<'a> {
    /// `kb` must be in normal form.
    pub fn new(theory: Theory, kb: &'a [Term]) -> Self {
        let mut index = Index::default();
        for t in kb {
            index.add(t);
        }
        Deriver {
            theory,
            kb,
            index: Cow::Owned(index),
            memo: HashMap::new(),
        }
    }

    pub fn derive(&mut self, target: &Term, depth_bound: u32) -> Derivation {
        let t = self.theory.normalize(target);
        let proof = self.go(&t, depth_bound);
        Derivation {
            target: t,
            depth_bound,
            proof,
        }
    }

    pub fn kb(&self) -> &[Term] {
        self.kb
    }

    fn go(&mut self, t: &Term, d: u32) -> Option<ProofTree> {
        if self.index.known.contains(t) {
            return Some(ProofTree::leaf(t.clone(), Step::Known));
        }
        if let Term::Public(_) = t {
            return Some(ProofTree::leaf(t.clone(), Step::Public));
        }
        if d == 0 {
            return None;
        }
        let key = (t.clone(), d);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let found = self.synthesise(t, d).or_else(|| self.analyse(t, d));
        self.memo.insert(key, found.clone());
        found
    }

    fn all(&mut self, goals: &[Term], d: u32) -> Option<Vec<ProofTree>> {
        goals.iter().map(|g| self.go(g, d)).collect()
    }

    fn synthesise(&mut self, t: &Term, d: u32) -> Option<ProofTree> {
        let node = |step, premises| ProofTree {
            conclusion: t.clone(),
            step,
            premises,
        };
        match t {
            Term::Pair(a, b) => {
                let ps = self.all(&[(**a).clone(), (**b).clone()], d - 1)?;
                Some(node(Step::Pair, ps))
            }
            Term::App(_) => {
                let (sym, args) = t.as_app().expect("application");
                if !sym.is_constructor() {
                    return None;
                }
                let args = args.to_vec();
                if let Some(ps) = self.all(&args, d - 1) {
                    return Some(node(Step::Apply(sym), ps));
                }
                if sym == Symbol::SsFn && self.theory.ecdh_canonicalization {
                    if let Some((Symbol::Pk, [b])) = args[1].as_app() {
                        let swapped = [b.clone(), Term::pk(args[0].clone())];
                        if self
                            .theory
                            .normalize(&Term::ss_fn(swapped[0].clone(), swapped[1].clone()))
                            == *t
                        {
                            if let Some(ps) = self.all(&swapped, d - 1) {
                                return Some(node(Step::Apply(sym), ps));
                            }
                        }
                    }
                }
                None
            }
            _ => None,
        }
    }

    fn analyse(&mut self, t: &Term, d: u32) -> Option<ProofTree> {
        let Some(candidates) = self.index.openers.get(t).cloned() else {
            return None;
        };
        for s in candidates {
            let opened = match &s {
                Term::Pair(a, b) => {
                    let step = if **a == *t {
                        Step::Fst
                    } else if **b == *t {
                        Step::Snd
                    } else {
                        continue;
                    };
                    self.go(&s, d - 1).map(|p| (step, vec![p]))
                }
                _ => match s.as_app() {
                    Some((Symbol::Senc, [_, k])) => {
                        let k = k.clone();
                        self.all(&[s.clone(), k], d - 1).map(|ps| (Step::Sdec, ps))
                    }
                    Some((Symbol::AeadEnc, [k, _, _])) => {
                        let k = k.clone();
                        self.all(&[k, s.clone()], d - 1)
                            .map(|ps| (Step::AeadDec, ps))
                    }
                    _ => None,
                },
            };
            if let Some((step, premises)) = opened {
                return Some(ProofTree {
                    conclusion: t.clone(),
                    step,
                    premises,
                });
            }
        }
        None
    }
}

/// Which secret a reveal hands over. Serialised as its event name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RevealKind {
    D0,
    Sk0,
    Di,
    Ski,
}

impl RevealKind {
    pub const ALL: [RevealKind; 4] = [
        RevealKind::D0,
        RevealKind::Sk0,
        RevealKind::Di,
        RevealKind::Ski,
    ];

    pub fn event_kind(self) -> EventKind {
        match self {
            RevealKind::D0 => EventKind::LtkRevealD0,
            RevealKind::Sk0 => EventKind::LtkRevealSk0,
            RevealKind::Di => EventKind::RevealDi,
            RevealKind::Ski => EventKind::RevealSki,
        }
    }

    pub fn name(self) -> &'static str {
        self.event_kind().name()
    }

    pub fn from_name(s: &str) -> Option<RevealKind> {
        RevealKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl From<RevealKind> for String {
    fn from(k: RevealKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for RevealKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        RevealKind::from_name(&s).ok_or_else(|| format!("unknown reveal kind '{s}'"))
    }
}

/// A key reveal. Parameters of the logged event are `(owner, lta, key)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealEvent {
    pub kind: RevealKind,
    pub owner: Term,
    pub lta: Term,
    pub key: Term,
    pub time: u32,
}

impl RevealEvent {
    pub fn to_trace_event(&self) -> TraceEvent {
        TraceEvent {
            kind: self.kind.event_kind(),
            params: vec![self.owner.clone(), self.lta.clone(), self.key.clone()],
            time: self.time,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("{kind:?} reveal of {key} is not enabled: no earlier establishing event")]
    NotEnabled { kind: RevealKind, key: String },
}

/// Whether `log` contains, strictly before `time`, the event that
/// established the key being revealed: `KeyEst` for the master halves and
/// an `LPFS` event for epoch keys.
pub fn reveal_enabled(log: &[TraceEvent], ev: &RevealEvent) -> bool {
    log.iter().filter(|e| e.time < ev.time).any(|e| {
        let p = &e.params;
        match (ev.kind, e.kind) {
            (RevealKind::D0, EventKind::KeyEst) => {
                p[0] == ev.owner && p[1] == ev.lta && p[2] == ev.key
            }
            (RevealKind::Sk0, EventKind::KeyEst) => {
                p[0] == ev.owner && p[1] == ev.lta && p[3] == ev.key
            }
            (RevealKind::Di, EventKind::Lpfs1 | EventKind::Lpfs2) => {
                p[1] == ev.owner && p[0] == ev.lta && p[4] == ev.key
            }
            (RevealKind::Ski, EventKind::Lpfs1 | EventKind::Lpfs2) => {
                p[1] == ev.owner && p[0] == ev.lta && p[5] == ev.key
            }
            _ => false,
        }
    })
}

/// Hands the key to the intruder and logs the reveal.
pub fn reveal(
    kb: &mut KnowledgeBase,
    log: &mut Vec<TraceEvent>,
    ev: RevealEvent,
) -> Result<(), AdversaryError> {
    if !reveal_enabled(log, &ev) {
        return Err(AdversaryError::NotEnabled {
            kind: ev.kind,
            key: ev.key.to_string(),
        });
    }
    kb.observe(&ev.key);
    log.push(ev.to_trace_event());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse;

    fn p(s: &str) -> Term {
        parse(s).unwrap()
    }

    fn kb(items: &[&str]) -> KnowledgeBase {
        let mut k = KnowledgeBase::new(Theory::default());
        for i in items {
            k.observe(&p(i));
        }
        k
    }

    fn check(k: &KnowledgeBase, target: &str, depth: u32) -> Option<u32> {
        let d = k.can_derive(&p(target), depth);
        d.proof.map(|pr| {
            assert_eq!(pr.replay(k).unwrap(), d.target);
            pr.height()
        })
    }

    #[test]
    fn observe_is_idempotent_and_monotone() {
        let mut k = KnowledgeBase::new(Theory::default());
        assert!(k.observe(&p("pk(~d_1)")));
        let before = k.clone();
        assert!(!k.observe(&p("pk(~d_1)")));
        assert_eq!(k, before);
        k.observe(&p("fst(<x,y>)"));
        assert!(before.is_subset_of(&k));
        assert!(k.contains(&p("x")));
        assert_eq!(k.prefix(1), before);
    }

    #[test]
    fn unknown_key_blocks_decryption() {
        let k = kb(&["senc(~loc,~k)"]);
        for d in 0..8 {
            assert_eq!(check(&k, "~loc", d), None);
        }
        let k = kb(&["senc(~loc,~k)", "~k"]);
        assert_eq!(check(&k, "~loc", 0), None);
        assert_eq!(check(&k, "~loc", 1), Some(1));
    }

    #[test]
    fn ecdh_either_orientation() {
        let k = kb(&["pk(~d_f)", "~d_i"]);
        assert_eq!(check(&k, "SS_fn(~d_f,pk(~d_i))", 3), Some(1));
        assert_eq!(check(&k, "SS_fn(~d_i,pk(~d_f))", 3), Some(1));
        let mut off = KnowledgeBase::new(Theory::without_ecdh());
        off.observe(&p("pk(~d_f)"));
        off.observe(&p("~d_i"));
        assert!(!off.can_derive(&p("SS_fn(~d_f,pk(~d_i))"), 4).derivable());
        assert!(off.can_derive(&p("SS_fn(~d_i,pk(~d_f))"), 4).derivable());
    }

    #[test]
    fn master_key_reconstructs_every_epoch() {
        let k = kb(&["~d0", "~SK0"]);
        let sk3 = "SK_fn(SK_fn(SK_fn(~SK0)))";
        assert_eq!(check(&k, sk3, 3), Some(3));
        assert_eq!(check(&k, sk3, 2), None);
        assert_eq!(check(&k, &format!("pk(di_fn(~d0,{sk3}))"), 5), Some(5));
    }

    #[test]
    fn pairs_and_aead() {
        let k = kb(&["<AEADenc(~k,<~loc,~t>,~iv),~k>"]);
        assert_eq!(check(&k, "~loc", 4), Some(3));
        assert_eq!(check(&k, "~iv", 6), None);
        assert_eq!(check(&k, "<~t,h(~k)>", 4), Some(4));
        assert_eq!(check(&k, "<~t,h(~k)>", 3), None);
        // public names are free
        assert_eq!(check(&k, "h(<O,L>)", 2), Some(2));
        // stuck destructors are never synthesised
        assert_eq!(check(&k, "sdec(~k,~k)", 6), None);
    }

    #[test]
    fn honest_transcript_keeps_location_secret() {
        let sk1 = "SK_fn(~SK0_1)";
        let d1 = format!("di_fn(~d0_1,{sk1})");
        let p1 = format!("pk({d1})");
        let ss = crate::term::normalize(&p(&format!("SS_fn(~d_f_1,{p1})")));
        let e = format!("KeyGen({ss},{p1})");
        let iv = format!("NonceGen({ss},{p1})");
        let report = format!("<AEADenc({e},<senc(~loc_1,{e}),~tF_1>,{iv}),pk(~d_f_1),h({p1})>");
        let k = kb(&[&p1, &report]);
        assert_eq!(check(&k, "~loc_1", 8), None);
        assert_eq!(check(&k, "~tF_1", 8), None);
        assert_eq!(check(&k, &d1, 8), None);
        // with d_1 the owner's computation goes through
        let mut k2 = k.clone();
        k2.observe(&p(&d1));
        assert!(check(&k2, "~loc_1", 8).is_some());
    }

    #[test]
    fn replay_rejects_forged_trees() {
        let k = kb(&["senc(~m,~k)"]);
        let forged = ProofTree {
            conclusion: p("~m"),
            step: Step::Sdec,
            premises: vec![
                ProofTree::leaf(p("senc(~m,~k)"), Step::Known),
                ProofTree::leaf(p("~k"), Step::Known),
            ],
        };
        assert!(forged.replay(&k).is_err());
        let wrong_key = ProofTree {
            conclusion: p("~m"),
            step: Step::Sdec,
            premises: vec![
                ProofTree::leaf(p("senc(~m,~k)"), Step::Known),
                ProofTree::leaf(p("a"), Step::Public),
            ],
        };
        assert!(wrong_key.replay(&k).is_err());
    }

    #[test]
    fn reveal_requires_establishment() {
        let mut k = KnowledgeBase::new(Theory::default());
        let mut log = Vec::new();
        let ev = RevealEvent {
            kind: RevealKind::D0,
            owner: p("O"),
            lta: p("L"),
            key: p("~d0_1"),
            time: 2,
        };
        assert!(reveal(&mut k, &mut log, ev.clone()).is_err());
        log.push(TraceEvent {
            kind: EventKind::KeyEst,
            params: vec![p("O"), p("L"), p("~d0_1"), p("~SK0_1")],
            time: 1,
        });
        reveal(&mut k, &mut log, ev).unwrap();
        assert!(k.contains(&p("~d0_1")));
        assert_eq!(log.last().unwrap().kind, EventKind::LtkRevealD0);
        // intermediate reveal needs the epoch event and leaks only d_1
        let d1 = p("di_fn(~d0_1,SK_fn(~SK0_1))");
        let di = RevealEvent {
            kind: RevealKind::Di,
            owner: p("O"),
            lta: p("L"),
            key: d1.clone(),
            time: 4,
        };
        let mut k2 = KnowledgeBase::new(Theory::default());
        let mut log2 = log[..1].to_vec();
        assert!(reveal(&mut k2, &mut log2, di.clone()).is_err());
        log2.push(TraceEvent {
            kind: EventKind::Lpfs1,
            params: vec![
                p("L"),
                p("O"),
                p("~d0_1"),
                p("~SK0_1"),
                d1.clone(),
                p("SK_fn(~SK0_1)"),
            ],
            time: 3,
        });
        reveal(&mut k2, &mut log2, di).unwrap();
        assert!(k2.contains(&d1));
        assert!(!k2.can_derive(&p("~d0_1"), 8).derivable());
    }
}
