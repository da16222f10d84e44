//! Multiset rewriting over the protocol rules and bounded exploration of
//! their interleavings.
//!
//! A [`Step`] is a fully computed rule instance: what it consumes, reads and
//! produces, what it sends to the network and which actions it records.
//! Rule effects are obtained by running the protocol roles against the
//! symbolic provider, so this module only decides *when* a role may act.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adversary::{reveal_enabled, KnowledgeBase, RevealEvent, RevealKind};
use crate::event::{EventKind, TraceEvent};
use crate::protocol::{
    emit_beacon, establish_master_key, finder_make_report, rotate_epoch, Agent, Beacon, EpochKeys,
    Journal, LocationReport, MasterBeaconKey, Owner, ProtocolEvent,
};
use crate::provider::{CryptoProvider, SymbolicProvider};
use crate::term::{Term, Theory};

/// Size limits for one exploration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    /// Owner/LTA pairs.
    pub sessions: u32,
    /// Highest epoch index an LTA may reach.
    pub epochs: u32,
    /// Finder reports (one finder role each).
    pub reports: u32,
    /// Deduction depth for `K` atoms and intruder inputs.
    pub depth: u32,
    /// Adversary-crafted reports per trace.
    pub injection: u32,
    /// Reveal rules to enable. `None` leaves the choice to each lemma.
    pub reveals: Option<BTreeSet<RevealKind>>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            sessions: 1,
            epochs: 3,
            reports: 2,
            depth: 6,
            injection: 4,
            reveals: None,
        }
    }
}

impl Bounds {
    /// Applies `key=value`. Reveals are given as a `+`-separated list of
    /// event names, or `none`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || {
            value
                .parse::<u32>()
                .map_err(|_| format!("bound {key} expects a non-negative integer, got '{value}'"))
        };
        match key {
            "sessions" => self.sessions = num()?,
            "epochs" => self.epochs = num()?,
            "reports" => self.reports = num()?,
            "depth" => self.depth = num()?,
            "injection" => self.injection = num()?,
            "reveals" => {
                let mut set = BTreeSet::new();
                if value != "none" && !value.is_empty() {
                    for part in value.split('+') {
                        let k = RevealKind::from_name(part)
                            .ok_or_else(|| format!("unknown reveal kind '{part}'"))?;
                        set.insert(k);
                    }
                }
                self.reveals = Some(set);
            }
            _ => return Err(format!("unknown bound '{key}'")),
        }
        Ok(())
    }
}

/// Everything that fixes the transition system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub bounds: Bounds,
    pub reveals: BTreeSet<RevealKind>,
    pub theory: Theory,
    pub symmetry_reduction: bool,
}

impl Scenario {
    pub fn new(bounds: Bounds, reveals: BTreeSet<RevealKind>) -> Self {
        Scenario {
            bounds,
            reveals,
            theory: Theory::default(),
            symmetry_reduction: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactName {
    Owner,
    Lta,
    Finder,
    Server,
    Okd,
    Lkd,
    Paired,
    Epoch,
    L2,
    Fin1,
    FUpload,
    Stored,
}

impl FactName {
    pub fn persistent(self) -> bool {
        matches!(
            self,
            FactName::Server
                | FactName::Okd
                | FactName::Paired
                | FactName::Epoch
                | FactName::Stored
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            FactName::Owner => "Owner",
            FactName::Lta => "LTA",
            FactName::Finder => "Finder",
            FactName::Server => "Server",
            FactName::Okd => "Okd",
            FactName::Lkd => "Lkd",
            FactName::Paired => "Paired",
            FactName::Epoch => "Epoch",
            FactName::L2 => "L_2",
            FactName::Fin1 => "Fin_1",
            FactName::FUpload => "F_upload",
            FactName::Stored => "Stored",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub name: FactName,
    pub args: Vec<Term>,
}

impl Fact {
    pub fn new(name: FactName, args: Vec<Term>) -> Self {
        Fact { name, args }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name.persistent() {
            f.write_str("!")?;
        }
        write!(f, "{}(", self.name.name())?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    GenKeys,
    RevealD0,
    RevealSk0,
    L1,
    L2,
    RevealDi,
    RevealSki,
    F1,
    ServerRecv,
    AdvInject,
    OwnerLocate,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::GenKeys => "GenKeys",
            Rule::RevealD0 => "Reveal_d0",
            Rule::RevealSk0 => "Reveal_SK0",
            Rule::L1 => "L_1",
            Rule::L2 => "L_2",
            Rule::RevealDi => "Reveal_di",
            Rule::RevealSki => "Reveal_ski",
            Rule::F1 => "F_1",
            Rule::ServerRecv => "Server_Recv",
            Rule::AdvInject => "Adv_Inject",
            Rule::OwnerLocate => "Owner_Locate",
        }
    }
}

/// A ground rule instance with its complete effect.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub rule: Rule,
    pub consumed: Vec<Fact>,
    pub read: Vec<Fact>,
    pub produced: Vec<Fact>,
    pub outs: Vec<Term>,
    pub actions: Vec<(EventKind, Vec<Term>)>,
    /// Instances sharing a key may fire at most once per trace between them.
    pub once: Option<Term>,
    pub injection: bool,
}

impl Step {
    fn new(rule: Rule) -> Self {
        Step {
            rule,
            consumed: Vec::new(),
            read: Vec::new(),
            produced: Vec::new(),
            outs: Vec::new(),
            actions: Vec::new(),
            once: None,
            injection: false,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule.name())?;
        for (k, ps) in &self.actions {
            let ps: Vec<String> = ps.iter().map(Term::to_string).collect();
            write!(f, " {k}({})", ps.join(","))?;
        }
        Ok(())
    }
}

/// Which steps an exploration must keep in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visibility {
    pub kinds: BTreeSet<EventKind>,
    /// Treat every step that sends a message as visible.
    pub outs: bool,
    /// Treat every step as visible.
    pub every_step: bool,
}

impl Visibility {
    /// Every step is visible: no partial-order reduction at all.
    pub fn all() -> Self {
        Visibility {
            kinds: EventKind::ALL.into_iter().collect(),
            outs: true,
            every_step: true,
        }
    }

    pub fn is_visible(&self, s: &Step) -> bool {
        self.every_step
            || (self.outs && !s.outs.is_empty())
            || s.actions.iter().any(|(k, _)| self.kinds.contains(k))
    }
}

/// A reachable configuration together with the trace that led to it.
#[derive(Clone, Debug)]
pub struct State {
    pub facts: Vec<Fact>,
    pub once: BTreeSet<Term>,
    pub injections: u32,
    pub kb: KnowledgeBase,
    /// `kb_marks[j]` is the knowledge base size after step `j + 1`.
    pub kb_marks: Vec<usize>,
    pub events: Vec<TraceEvent>,
    pub steps: Vec<Arc<Step>>,
    /// Fingerprints of `steps`, in order.
    prints: Vec<u128>,
}

impl State {
    pub fn initial(scenario: &Scenario) -> State {
        let b = &scenario.bounds;
        let mut facts = Vec::new();
        for i in 1..=b.sessions {
            facts.push(Fact::new(FactName::Owner, vec![owner_name(i)]));
            facts.push(Fact::new(FactName::Lta, vec![lta_name(i)]));
        }
        for i in 1..=b.reports {
            facts.push(Fact::new(FactName::Finder, vec![finder_name(i)]));
        }
        facts.push(Fact::new(FactName::Server, vec![Term::public("S")]));
        State {
            facts,
            once: BTreeSet::new(),
            injections: 0,
            kb: KnowledgeBase::new(scenario.theory),
            kb_marks: Vec::new(),
            events: Vec::new(),
            steps: Vec::new(),
            prints: Vec::new(),
        }
    }

    /// Number of steps taken; also the latest timestamp.
    pub fn len(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The knowledge base as of timestamp `t` (1-based).
    pub fn kb_at(&self, t: u32) -> KnowledgeBase {
        let n = if t == 0 {
            0
        } else {
            self.kb_marks[(t - 1) as usize]
        };
        self.kb.prefix(n)
    }

    fn find(&self, name: FactName) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(move |f| f.name == name)
    }

    /// Applies an enabled step.
    pub fn apply(&self, step: &Step) -> State {
        let mut next = self.clone();
        for c in &step.consumed {
            let idx = next
                .facts
                .iter()
                .position(|f| f == c)
                .expect("consumed fact present");
            next.facts.remove(idx);
        }
        for p in &step.produced {
            if !(p.name.persistent() && next.facts.contains(p)) {
                next.facts.push(p.clone());
            }
        }
        if let Some(k) = &step.once {
            next.once.insert(k.clone());
        }
        if step.injection {
            next.injections += 1;
        }
        for o in &step.outs {
            next.kb.observe(o);
        }
        next.kb_marks.push(next.kb.len());
        let time = next.len() + 1;
        for (kind, params) in &step.actions {
            next.events.push(TraceEvent {
                kind: *kind,
                params: params.clone(),
                time,
            });
        }
        next.prints.push(fingerprint(step));
        next.steps.push(Arc::new(step.clone()));
        next
    }
}

fn owner_name(i: u32) -> Term {
    Term::public(format!("O{i}"))
}
fn lta_name(i: u32) -> Term {
    Term::public(format!("L{i}"))
}
fn finder_name(i: u32) -> Term {
    Term::public(format!("F{i}"))
}

/// Index of an agent name such as `F2`.
fn agent_index(t: &Term) -> u32 {
    match t {
        Term::Public(s) => s
            .trim_start_matches(|c: char| c.is_ascii_alphabetic())
            .parse()
            .unwrap_or(0),
        _ => 0,
    }
}

fn agent(t: &Term) -> Agent {
    Agent::new(t.to_string())
}

fn agent_term(a: &Agent) -> Term {
    Term::public(a.name())
}

type Sym = SymbolicProvider;

fn action_of(e: &ProtocolEvent<Sym>) -> (EventKind, Vec<Term>) {
    match e {
        ProtocolEvent::KeyEst {
            owner,
            lta,
            d0,
            sk0,
        } => (
            EventKind::KeyEst,
            vec![agent_term(owner), agent_term(lta), d0.clone(), sk0.clone()],
        ),
        ProtocolEvent::Lpfs {
            epoch,
            lta,
            owner,
            d0,
            sk0,
            d,
            sk,
        } => (
            if *epoch == 1 {
                EventKind::Lpfs1
            } else {
                EventKind::Lpfs2
            },
            vec![
                agent_term(lta),
                agent_term(owner),
                d0.clone(),
                sk0.clone(),
                d.clone(),
                sk.clone(),
            ],
        ),
        ProtocolEvent::OkS {
            lta,
            owner,
            d0,
            sk0,
        } => (
            EventKind::OkS,
            vec![agent_term(lta), agent_term(owner), d0.clone(), sk0.clone()],
        ),
        ProtocolEvent::Floc { loc, d_f, p_i } => {
            (EventKind::Floc, vec![loc.clone(), d_f.clone(), p_i.clone()])
        }
        ProtocolEvent::ServerRecv { server, report_id } => (
            EventKind::ServerRecv,
            vec![agent_term(server), report_id.clone()],
        ),
        ProtocolEvent::OwnerQuery { owner, report_id } => (
            EventKind::OwnerQuery,
            vec![agent_term(owner), report_id.clone()],
        ),
        ProtocolEvent::OwnerDecrypt {
            owner,
            lta,
            loc,
            t_f,
        } => (
            EventKind::OwnerDecrypt,
            vec![agent_term(owner), agent_term(lta), loc.clone(), t_f.clone()],
        ),
    }
}

fn master_of(o: &Term, l: &Term, d0: &Term, sk0: &Term) -> MasterBeaconKey<Sym> {
    MasterBeaconKey {
        owner: agent(o),
        lta: agent(l),
        d0: d0.clone(),
        sk0: sk0.clone(),
    }
}

fn report_message(r: &LocationReport<Sym>) -> Term {
    Term::pair(
        r.ciphertext.clone(),
        Term::pair(r.ephemeral_pub.clone(), r.report_id.clone()),
    )
}

fn report_from_message(msg: &Term) -> Option<LocationReport<Sym>> {
    let Term::Pair(c, rest) = msg else {
        return None;
    };
    let Term::Pair(pf, h) = rest.as_ref() else {
        return None;
    };
    Some(LocationReport {
        ciphertext: (**c).clone(),
        ephemeral_pub: (**pf).clone(),
        report_id: (**h).clone(),
        upload_time: None,
    })
}

/// Public names the intruder uses when it crafts a report itself.
pub const ADV_DF: &str = "adv_df";
pub const ADV_LOC: &str = "adv_loc";
pub const ADV_T: &str = "adv_t";

/// All rule instances enabled in `state`, in a fixed order.
pub fn enabled_steps(scenario: &Scenario, state: &State) -> Vec<Step> {
    let th = scenario.theory;
    let b = &scenario.bounds;
    let sym = scenario.symmetry_reduction;
    let mut out = Vec::new();
    let lowest = |name: FactName| -> Vec<&Fact> {
        let mut v: Vec<&Fact> = state.find(name).collect();
        v.sort_by_key(|f| agent_index(&f.args[0]));
        if sym {
            v.truncate(1);
        }
        v
    };

    // GenKeys
    for o in lowest(FactName::Owner) {
        for l in lowest(FactName::Lta) {
            let (ot, lt) = (&o.args[0], &l.args[0]);
            let mut p = Sym::scoped(th, agent_index(ot));
            let mut j = Journal::new();
            let mk = establish_master_key(&agent(ot), &agent(lt), &mut p);
            j.events.push(ProtocolEvent::KeyEst {
                owner: mk.owner.clone(),
                lta: mk.lta.clone(),
                d0: mk.d0.clone(),
                sk0: mk.sk0.clone(),
            });
            let args =
                |a: &Term, b: &Term| vec![a.clone(), b.clone(), mk.d0.clone(), mk.sk0.clone()];
            let mut s = Step::new(Rule::GenKeys);
            s.consumed = vec![o.clone(), l.clone()];
            s.produced = vec![
                Fact::new(FactName::Okd, args(ot, lt)),
                Fact::new(FactName::Lkd, args(lt, ot)),
                Fact::new(FactName::Paired, args(ot, lt)),
            ];
            s.actions = j.events.iter().map(action_of).collect();
            out.push(s);
        }
    }

    // master key reveals
    for paired in state.find(FactName::Paired) {
        let (o, l, d0, sk0) = (
            &paired.args[0],
            &paired.args[1],
            &paired.args[2],
            &paired.args[3],
        );
        for (kind, rule, key) in [
            (RevealKind::D0, Rule::RevealD0, d0),
            (RevealKind::Sk0, Rule::RevealSk0, sk0),
        ] {
            if let Some(s) = reveal_step(scenario, state, kind, rule, paired, o, l, key) {
                out.push(s);
            }
        }
    }

    // L_1
    if b.epochs >= 1 {
        for lkd in state.find(FactName::Lkd) {
            let (l, o, d0, sk0) = (&lkd.args[0], &lkd.args[1], &lkd.args[2], &lkd.args[3]);
            let master = master_of(o, l, d0, sk0);
            let p = Sym::new(th);
            let e1 = rotate_epoch(&master, None, &p).expect("symbolic rotation");
            let mut s = lta_step(Rule::L1, &master, &e1);
            s.consumed = vec![lkd.clone()];
            out.push(s);
        }
    }

    // L_2
    for st in state.find(FactName::L2) {
        let (o, l, d0, sk0, ski) = (
            &st.args[0],
            &st.args[1],
            &st.args[2],
            &st.args[3],
            &st.args[4],
        );
        let i = ski.sk_chain_len();
        if i >= b.epochs {
            continue;
        }
        let master = master_of(o, l, d0, sk0);
        let p = Sym::new(th);
        let d = p.d_next(d0, ski).expect("symbolic");
        let prev = EpochKeys::<Sym> {
            index: i,
            sk: ski.clone(),
            p: p.pub_of(&d),
            d,
        };
        let next = rotate_epoch(&master, Some(&prev), &p).expect("symbolic rotation");
        let mut s = lta_step(Rule::L2, &master, &next);
        s.consumed = vec![st.clone()];
        out.push(s);
    }

    // epoch key reveals
    for ep in state.find(FactName::Epoch) {
        let (l, o, d, sk) = (&ep.args[0], &ep.args[1], &ep.args[2], &ep.args[3]);
        for (kind, rule, key) in [
            (RevealKind::Di, Rule::RevealDi, d),
            (RevealKind::Ski, Rule::RevealSki, sk),
        ] {
            if let Some(s) = reveal_step(scenario, state, kind, rule, ep, o, l, key) {
                out.push(s);
            }
        }
    }

    // F_1
    let server = state.find(FactName::Server).next().cloned();
    if let Some(server) = &server {
        for fin in state.find(FactName::Fin1) {
            let p_i = &fin.args[0];
            // In(p_i): the finder hears the beacon off the adversary's network
            if !state.kb.can_derive(p_i, b.depth).derivable() {
                continue;
            }
            for finder in lowest(FactName::Finder) {
                let f = &finder.args[0];
                let mut p = Sym::scoped(th, agent_index(f));
                let mut j = Journal::new();
                let loc = p.fresh_secret("loc");
                let tf = p.fresh_secret("tF");
                let beacon = Beacon::<Sym> {
                    p_i: p_i.clone(),
                    metadata: Vec::new(),
                };
                let r = finder_make_report(&beacon, &loc, &tf, &mut p, &mut j)
                    .expect("symbolic report");
                let msg = report_message(&r);
                let mut s = Step::new(Rule::F1);
                s.consumed = vec![fin.clone(), finder.clone()];
                s.read = vec![server.clone()];
                s.produced = vec![Fact::new(
                    FactName::FUpload,
                    vec![f.clone(), server.args[0].clone(), msg.clone()],
                )];
                s.outs = vec![msg];
                s.actions = j.events.iter().map(action_of).collect();
                out.push(s);
            }
        }
    }

    // Server_Recv
    for up in state.find(FactName::FUpload) {
        let (srv, msg) = (&up.args[1], &up.args[2]);
        let Some(r) = report_from_message(msg) else {
            continue;
        };
        let mut s = Step::new(Rule::ServerRecv);
        s.consumed = vec![up.clone()];
        s.produced = vec![Fact::new(FactName::Stored, vec![srv.clone(), msg.clone()])];
        s.actions = vec![(EventKind::ServerRecv, vec![srv.clone(), r.report_id])];
        out.push(s);
    }

    // Adv_Inject
    if let Some(server) = &server {
        if state.injections < b.injection {
            for ep in state.find(FactName::Epoch) {
                let p_i = Term::pk(ep.args[2].clone());
                let once = Term::pair(Term::public("inject"), p_i.clone());
                if state.once.contains(&once) || !state.kb.can_derive(&p_i, b.depth).derivable() {
                    continue;
                }
                let msg = crafted_report(th, &p_i);
                if !state.kb.can_derive(&msg, b.depth).derivable() {
                    continue;
                }
                let mut s = Step::new(Rule::AdvInject);
                s.read = vec![ep.clone(), server.clone()];
                s.produced = vec![Fact::new(
                    FactName::FUpload,
                    vec![Term::public("Adv"), server.args[0].clone(), msg],
                )];
                s.once = Some(once);
                s.injection = true;
                out.push(s);
            }
        }
    }

    // Owner_Locate
    for okd in state.find(FactName::Okd) {
        let (o, l, d0, sk0) = (&okd.args[0], &okd.args[1], &okd.args[2], &okd.args[3]);
        let p = Sym::new(th);
        let mut owner = Owner::new(master_of(o, l, d0, sk0));
        owner
            .derive_through(b.epochs, &p)
            .expect("symbolic rotation");
        for stored in state.find(FactName::Stored) {
            let msg = &stored.args[1];
            let once = Term::pair(Term::public("locate"), Term::pair(o.clone(), msg.clone()));
            if state.once.contains(&once) {
                continue;
            }
            let Some(report) = report_from_message(msg) else {
                continue;
            };
            let mut j = Journal::new();
            if owner.locate(&report, &p, &mut j).is_err() {
                continue;
            }
            let mut s = Step::new(Rule::OwnerLocate);
            s.read = vec![okd.clone(), stored.clone()];
            s.once = Some(once);
            s.actions = vec![(
                EventKind::OwnerQuery,
                vec![o.clone(), report.report_id.clone()],
            )];
            s.actions.extend(j.events.iter().map(action_of));
            out.push(s);
        }
    }

    out
}

/// The report an intruder builds for beacon `p_i` from its own public names.
pub fn crafted_report(theory: Theory, p_i: &Term) -> Term {
    let p = Sym::new(theory);
    let df = Term::public(ADV_DF);
    let ss = p.ecdh(&df, p_i).expect("symbolic");
    let e = p.key_of(&ss, p_i);
    let iv = p.iv_of(&ss, p_i);
    let inner = p.pair(
        &p.sym_seal(&e, &Term::public(ADV_LOC)),
        &Term::public(ADV_T),
    );
    Term::pair(
        p.aead_seal(&e, &inner, &iv),
        Term::pair(p.pub_of(&df), p.hash(p_i)),
    )
}

fn lta_step(rule: Rule, master: &MasterBeaconKey<Sym>, keys: &EpochKeys<Sym>) -> Step {
    let mut j = Journal::new();
    let beacon = emit_beacon(master, keys, &mut j);
    let (o, l) = (agent_term(&master.owner), agent_term(&master.lta));
    let mut s = Step::new(rule);
    s.produced = vec![
        Fact::new(FactName::Fin1, vec![beacon.p_i.clone()]),
        Fact::new(
            FactName::L2,
            vec![
                o.clone(),
                l.clone(),
                master.d0.clone(),
                master.sk0.clone(),
                keys.sk.clone(),
            ],
        ),
        Fact::new(FactName::Epoch, vec![l, o, keys.d.clone(), keys.sk.clone()]),
    ];
    s.outs = vec![beacon.p_i];
    s.actions = j.events.iter().map(action_of).collect();
    s
}

#[allow(clippy::too_many_arguments)]
fn reveal_step(
    scenario: &Scenario,
    state: &State,
    kind: RevealKind,
    rule: Rule,
    gate: &Fact,
    owner: &Term,
    lta: &Term,
    key: &Term,
) -> Option<Step> {
    if !scenario.reveals.contains(&kind) {
        return None;
    }
    let once = Term::pair(Term::public(kind.name()), key.clone());
    if state.once.contains(&once) {
        return None;
    }
    let ev = RevealEvent {
        kind,
        owner: owner.clone(),
        lta: lta.clone(),
        key: key.clone(),
        time: state.len() + 1,
    };
    if !reveal_enabled(&state.events, &ev) {
        return None;
    }
    let te = ev.to_trace_event();
    let mut s = Step::new(rule);
    s.read = vec![gate.clone()];
    s.outs = vec![key.clone()];
    s.actions = vec![(te.kind, te.params)];
    s.once = Some(once);
    Some(s)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    /// Nodes of the search tree, including the root.
    pub nodes: u64,
    /// Nodes with no enabled step at all.
    pub maximal_traces: u64,
}

/// Depth-first search that merges trace prefixes differing only in the
/// order of invisible steps. `visit` sees every node together with a flag
/// telling whether it is maximal, and may stop the search.
///
/// Two prefixes are merged when they reach the same facts, knowledge and
/// event multiset and agree on the sequence of visible steps. Such prefixes
/// have the same continuations, and a formula whose atoms only mention
/// visible steps cannot tell them apart, so exploring one of them suffices.
/// On top of that, steps that can be neither observed nor interfered with
/// (see [`is_safe`]) are taken as soon as they are enabled.
pub fn explore<F>(scenario: &Scenario, vis: &Visibility, mut visit: F) -> ExploreStats
where
    F: FnMut(&State, bool) -> ControlFlow<()>,
{
    let mut stats = ExploreStats::default();
    let root = State::initial(scenario);
    let mut seen = HashSet::new();
    let _ = dfs(scenario, vis, &root, &mut seen, &mut visit, &mut stats);
    stats
}

/// What the future of a node, and every formula over it, can depend on.
///
/// Facts, knowledge, reveal bookkeeping and the event multiset are all
/// functions of the multiset of steps taken, so that multiset stands in for
/// them.
#[derive(PartialEq, Eq, Hash)]
struct NodeKey {
    taken: Vec<u128>,
    visible: Vec<u128>,
}

impl NodeKey {
    fn of(state: &State, vis: &Visibility) -> NodeKey {
        let mut taken = state.prints.clone();
        taken.sort_unstable();
        let visible = state
            .steps
            .iter()
            .zip(&state.prints)
            .filter(|(s, _)| vis.is_visible(s))
            .map(|(_, p)| *p)
            .collect();
        NodeKey { taken, visible }
    }
}

fn fingerprint(step: &Step) -> u128 {
    let mut a = DefaultHasher::new();
    let mut b = DefaultHasher::new();
    0u8.hash(&mut a);
    1u8.hash(&mut b);
    step.hash(&mut a);
    step.hash(&mut b);
    (u128::from(a.finish()) << 64) | u128::from(b.finish())
}

/// Invisible, sends nothing, and independent of every step that could
/// still run before it:
/// - `Server_Recv` consumes an upload no other instance touches;
/// - `Owner_Locate` consumes nothing and fires at most once per report;
/// - `Adv_Inject` only competes with other injections for the budget, and
///   not at all when the budget covers every epoch key.
///
/// None of them produces anything another kind of step consumes, so moving
/// them earlier never disables a step.
fn is_safe(scenario: &Scenario, vis: &Visibility, t: &Step) -> bool {
    if vis.is_visible(t) || !t.outs.is_empty() {
        return false;
    }
    let b = &scenario.bounds;
    match t.rule {
        Rule::ServerRecv | Rule::OwnerLocate => true,
        Rule::AdvInject => b.injection >= b.sessions.saturating_mul(b.epochs),
        _ => false,
    }
}

fn dfs<F>(
    scenario: &Scenario,
    vis: &Visibility,
    state: &State,
    seen: &mut HashSet<NodeKey>,
    visit: &mut F,
    stats: &mut ExploreStats,
) -> ControlFlow<()>
where
    F: FnMut(&State, bool) -> ControlFlow<()>,
{
    if !seen.insert(NodeKey::of(state, vis)) {
        return ControlFlow::Continue(());
    }
    stats.nodes += 1;
    let enabled = enabled_steps(scenario, state);
    if enabled.is_empty() {
        stats.maximal_traces += 1;
    }
    visit(state, enabled.is_empty())?;
    // a safe step commutes with everything that could precede it, so taking
    // it alone loses no ordering a formula could observe
    let ample = match enabled.iter().position(|t| is_safe(scenario, vis, t)) {
        Some(i) => vec![enabled[i].clone()],
        None => enabled,
    };
    for t in ample {
        let next = state.apply(&t);
        dfs(scenario, vis, &next, seen, visit, stats)?;
    }
    ControlFlow::Continue(())
}

/// Every maximal trace reached by [`explore`], in search order.
pub fn enumerate_traces(scenario: &Scenario, vis: &Visibility) -> (Vec<State>, ExploreStats) {
    let mut out = Vec::new();
    let stats = explore(scenario, vis, |s, maximal| {
        if maximal {
            out.push(s.clone());
        }
        ControlFlow::Continue(())
    });
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scen(sessions: u32, epochs: u32, reports: u32, reveals: &[RevealKind]) -> Scenario {
        Scenario::new(
            Bounds {
                sessions,
                epochs,
                reports,
                depth: 6,
                injection: 0,
                reveals: None,
            },
            reveals.iter().copied().collect(),
        )
    }

    fn rules<S: std::ops::Deref<Target = Step>>(s: &[S]) -> Vec<&'static str> {
        s.iter().map(|x| x.rule.name()).collect()
    }

    #[test]
    fn initial_and_after_pairing() {
        let sc = scen(1, 2, 0, &[RevealKind::D0]);
        let s0 = State::initial(&sc);
        assert_eq!(
            rules(&enabled_steps(&sc, &s0).iter().collect::<Vec<_>>()),
            vec!["GenKeys"]
        );
        let g = enabled_steps(&sc, &s0).remove(0);
        let s1 = s0.apply(&g);
        assert_eq!(s1.events[0].kind, EventKind::KeyEst);
        let en = rules(&enabled_steps(&sc, &s1).iter().collect::<Vec<_>>());
        assert!(en.contains(&"L_1") && en.contains(&"Reveal_d0"));
        assert!(!en.contains(&"L_2"));
    }

    #[test]
    fn epoch_bound_cuts_l2() {
        let sc = scen(1, 1, 0, &[]);
        let mut s = State::initial(&sc);
        for _ in 0..2 {
            let st = enabled_steps(&sc, &s).remove(0);
            s = s.apply(&st);
        }
        assert_eq!(s.steps[1].rule, Rule::L1);
        assert!(enabled_steps(&sc, &s).is_empty());
    }

    #[test]
    fn one_epoch_trace_is_keyest_then_lpfs1() {
        let sc = scen(1, 1, 0, &[]);
        let (traces, _) = enumerate_traces(&sc, &Visibility::all());
        assert_eq!(traces.len(), 1);
        let kinds: Vec<EventKind> = traces[0].events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EventKind::KeyEst, EventKind::Lpfs1, EventKind::OkS]
        );
        assert_eq!(traces[0].events[1].time, 2);
    }

    #[test]
    fn zero_sessions_only_empty_trace() {
        let sc = scen(0, 3, 2, &RevealKind::ALL);
        let (traces, stats) = enumerate_traces(&sc, &Visibility::all());
        assert_eq!(traces.len(), 1);
        assert!(traces[0].is_empty());
        assert_eq!(stats.nodes, 1);
    }

    #[test]
    fn reveals_add_traces() {
        let without = enumerate_traces(&scen(1, 2, 1, &[]), &Visibility::all())
            .0
            .len();
        let with = enumerate_traces(&scen(1, 2, 1, &[RevealKind::D0]), &Visibility::all())
            .0
            .len();
        assert!(with > without, "{with} <= {without}");
    }

    #[test]
    fn honest_run_reaches_owner_decrypt() {
        let sc = scen(1, 1, 1, &[]);
        let (traces, _) = enumerate_traces(&sc, &Visibility::all());
        let t = &traces[0];
        assert_eq!(
            rules(&t.steps),
            vec!["GenKeys", "L_1", "F_1", "Server_Recv", "Owner_Locate"]
        );
        let dec = t
            .events
            .iter()
            .find(|e| e.kind == EventKind::OwnerDecrypt)
            .unwrap();
        assert_eq!(dec.params[2], Term::fresh("loc", 1));
        let mut off = sc.clone();
        off.theory = Theory::without_ecdh();
        let (traces, _) = enumerate_traces(&off, &Visibility::all());
        assert!(traces
            .iter()
            .all(|t| t.events.iter().all(|e| e.kind != EventKind::OwnerDecrypt)));
    }

    #[test]
    fn injected_report_is_accepted_by_owner() {
        let mut sc = scen(1, 1, 0, &[]);
        sc.bounds.injection = 1;
        let (traces, _) = enumerate_traces(&sc, &Visibility::all());
        let hit = traces
            .iter()
            .flat_map(|t| &t.events)
            .find(|e| e.kind == EventKind::OwnerDecrypt)
            .unwrap();
        assert_eq!(hit.params[2], Term::public(ADV_LOC));
    }

    #[test]
    fn linear_facts_consumed_once() {
        let sc = scen(1, 2, 1, &[RevealKind::D0, RevealKind::Di]);
        let (traces, _) = enumerate_traces(&sc, &Visibility::all());
        for t in &traces {
            let mut seen = Vec::new();
            for s in &t.steps {
                for c in &s.consumed {
                    assert!(!c.name.persistent());
                    assert!(!seen.contains(c), "{c} consumed twice");
                    seen.push(c.clone());
                }
            }
            let mut per_kind = BTreeSet::new();
            for e in &t.events {
                assert!(per_kind.insert((e.kind, e.time)));
            }
            for w in t.events.windows(2) {
                assert!(w[0].time <= w[1].time);
            }
        }
    }

    #[test]
    fn bounds_parse() {
        let mut b = Bounds::default();
        b.set("epochs", "2").unwrap();
        b.set("reveals", "LtkReveal_d0+Reveal_di").unwrap();
        assert_eq!(b.epochs, 2);
        assert_eq!(b.reveals.as_ref().unwrap().len(), 2);
        assert!(b.set("epochs", "-1").is_err());
        assert!(b.set("nope", "1").is_err());
        assert!(b.set("reveals", "bogus").is_err());
    }
}
