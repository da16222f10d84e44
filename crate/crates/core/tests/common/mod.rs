//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the deduction engine or the formula solver: the
//! closure oracle saturates a finite universe bottom-up, and the trace
//! oracle walks every interleaving and expands quantifiers by brute force.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use findmy_verif::adversary::KnowledgeBase;
use findmy_verif::event::TraceEvent;
use findmy_verif::term::{Symbol, Term, Theory};
use findmy_verif::trace::engine::enabled_steps;
use findmy_verif::trace::formula::{Env, Pattern, Value};
use findmy_verif::trace::{Formula, LemmaKind, Scenario, State};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- closure

fn universe(theory: Theory, kb: &[Term], target: &Term) -> BTreeSet<Term> {
    let mut u = BTreeSet::new();
    target.collect_subterms(&mut u);
    for t in kb {
        t.collect_subterms(&mut u);
    }
    if theory.ecdh_canonicalization {
        let extra: Vec<Term> = u
            .iter()
            .filter_map(|t| match t.as_app() {
                Some((Symbol::SsFn, [x, _])) => Some(Term::pk(x.clone())),
                _ => None,
            })
            .collect();
        u.extend(extra);
    }
    u
}

fn one_step(theory: Theory, t: &Term, known: &BTreeSet<Term>) -> bool {
    match t {
        Term::Pair(a, b) => known.contains(&**a) && known.contains(&**b),
        Term::App(_) => {
            let (sym, args) = t.as_app().unwrap();
            if !sym.is_constructor() {
                return false;
            }
            if args.iter().all(|a| known.contains(a)) {
                return true;
            }
            // ss(x, pk(y)) = ss(y, pk(x))
            if sym == Symbol::SsFn && theory.ecdh_canonicalization {
                if let Some((Symbol::Pk, [y])) = args[1].as_app() {
                    return known.contains(y) && known.contains(&Term::pk(args[0].clone()));
                }
            }
            false
        }
        _ => false,
    }
}

fn opened(t: &Term, known: &BTreeSet<Term>) -> Vec<Term> {
    match t {
        Term::Pair(a, b) => vec![(**a).clone(), (**b).clone()],
        _ => match t.as_app() {
            Some((Symbol::Senc, [m, k])) if known.contains(k) => vec![m.clone()],
            Some((Symbol::AeadEnc, [k, m, _])) if known.contains(k) => vec![m.clone()],
            _ => Vec::new(),
        },
    }
}

/// Whether `target` is derivable from `kb` with a proof of height at most
/// `depth`: level 0 is the knowledge base plus public names, level `i + 1`
/// adds everything one rule away from level `i`.
pub fn closure_derivable(theory: Theory, kb: &[Term], target: &Term, depth: u32) -> bool {
    let target = theory.normalize(target);
    let kb: Vec<Term> = kb.iter().map(|t| theory.normalize(t)).collect();
    let u = universe(theory, &kb, &target);
    let mut known: BTreeSet<Term> = kb.iter().cloned().collect();
    known.extend(u.iter().filter(|t| matches!(t, Term::Public(_))).cloned());
    for _ in 0..depth {
        if known.contains(&target) {
            break;
        }
        let mut next = known.clone();
        for t in &u {
            if !known.contains(t) && one_step(theory, t, &known) {
                next.insert(t.clone());
            }
        }
        for t in &known {
            next.extend(opened(t, &known));
        }
        if next == known {
            break;
        }
        known = next;
    }
    known.contains(&target)
}

// ------------------------------------------------------------ generation

fn atom(rng: &mut ChaCha8Rng) -> Term {
    match rng.gen_range(0..6) {
        0 => Term::public("a"),
        1 => Term::public("b"),
        2 => Term::fresh("k", 1),
        3 => Term::fresh("n", 2),
        4 => Term::fresh("d", 3),
        _ => Term::fresh("e", 4),
    }
}

/// A random term of height at most `h`, built from a small atom pool so
/// that independently drawn terms share structure.
pub fn random_term(rng: &mut ChaCha8Rng, h: u32) -> Term {
    if h == 0 || rng.gen_bool(0.3) {
        return atom(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| random_term(rng, h - 1);
    match rng.gen_range(0..12) {
        0 | 1 => Term::pair(sub(rng), sub(rng)),
        2 => Term::pk(sub(rng)),
        3 => Term::h(sub(rng)),
        4 => Term::senc(sub(rng), sub(rng)),
        5 => Term::sk_fn(sub(rng)),
        6 => {
            let x = sub(rng);
            let y = atom(rng);
            Term::ss_fn(x, Term::pk(y))
        }
        7 => Term::key_gen(sub(rng), sub(rng)),
        8 => Term::aead_enc(sub(rng), sub(rng), sub(rng)),
        9 => Term::di_fn(sub(rng), sub(rng)),
        10 => Term::sdec(sub(rng), sub(rng)),
        _ => Term::fst(sub(rng)),
    }
}

fn pick_subterm(rng: &mut ChaCha8Rng, t: &Term) -> Term {
    let mut all = BTreeSet::new();
    t.collect_subterms(&mut all);
    let v: Vec<Term> = all.into_iter().collect();
    v[rng.gen_range(0..v.len())].clone()
}

/// One deduction instance: up to five knowledge base terms, a target that
/// is often (but not always) related to them, and a depth bound.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Term>, Term, u32) {
    let n = rng.gen_range(1..=5);
    let kb: Vec<Term> = (0..n).map(|_| random_term(rng, 3)).collect();
    let target = match rng.gen_range(0..10) {
        0..=3 => {
            let i = rng.gen_range(0..kb.len());
            pick_subterm(rng, &kb[i])
        }
        4..=6 => {
            // rebuild from pieces of the knowledge base
            let i = rng.gen_range(0..kb.len());
            let j = rng.gen_range(0..kb.len());
            let (a, b) = (pick_subterm(rng, &kb[i]), pick_subterm(rng, &kb[j]));
            match rng.gen_range(0..5) {
                0 => Term::pair(a, b),
                1 => Term::h(a),
                2 => Term::senc(a, b),
                3 => Term::ss_fn(a, Term::pk(b)),
                _ => Term::key_gen(a, b),
            }
        }
        _ => random_term(rng, 3),
    };
    (kb, target, rng.gen_range(0..=3))
}

pub fn knowledge(theory: Theory, kb: &[Term]) -> KnowledgeBase {
    let mut k = KnowledgeBase::new(theory);
    for t in kb {
        k.observe(t);
    }
    k
}

// ----------------------------------------------------------------- traces

/// Every prefix of every interleaving, with no merging of equivalent
/// states and no eager steps. Calls `visit` on each node, stopping early
/// once it returns `true`.
pub fn naive_walk(sc: &Scenario, visit: &mut dyn FnMut(&State) -> bool) -> u64 {
    fn go(sc: &Scenario, st: &State, visit: &mut dyn FnMut(&State) -> bool, n: &mut u64) -> bool {
        *n += 1;
        if visit(st) {
            return true;
        }
        for step in enabled_steps(sc, st) {
            if go(sc, &st.apply(&step), visit, n) {
                return true;
            }
        }
        false
    }
    let mut n = 0;
    go(sc, &State::initial(sc), visit, &mut n);
    n
}

fn pattern_vars(p: &Pattern, out: &mut BTreeSet<String>) {
    p.vars(out)
}

fn match_pattern(p: &Pattern, t: &Term, env: &mut Env) -> bool {
    match p {
        Pattern::Var(v) => match env.get(v) {
            Some(Value::Term(b)) => b == t,
            Some(Value::Time(_)) => false,
            None => {
                env.insert(v.clone(), Value::Term(t.clone()));
                true
            }
        },
        Pattern::Ground(g) => g == t,
        Pattern::Pair(a, b) => match t {
            Term::Pair(x, y) => match_pattern(a, x, env) && match_pattern(b, y, env),
            _ => false,
        },
        Pattern::App(s, ps) => match t.as_app() {
            Some((ts, args)) if ts == *s => {
                ps.iter().zip(args).all(|(p, a)| match_pattern(p, a, env))
            }
            _ => false,
        },
    }
}

fn top_conjuncts(f: &Formula) -> Vec<&Formula> {
    match f {
        Formula::And(xs) => xs.iter().flat_map(top_conjuncts).collect(),
        other => vec![other],
    }
}

/// Brute-force evaluation of a closed formula on one trace.
pub struct NaiveEval<'a> {
    pub state: &'a State,
    pub theory: Theory,
    pub depth: u32,
}

impl NaiveEval<'_> {
    fn len(&self) -> u32 {
        self.state.steps.len() as u32
    }

    fn time(env: &Env, v: &str) -> Option<u32> {
        match env.get(v) {
            Some(Value::Time(t)) => Some(*t),
            _ => None,
        }
    }

    fn known_at(&self, t: &Term, j: u32) -> bool {
        if j < 1 || j > self.len() {
            return false;
        }
        let n = self.state.kb_marks[(j - 1) as usize];
        closure_derivable(self.theory, &self.state.kb.terms()[..n], t, self.depth)
    }

    /// Every assignment of `vs` that could make `guard` true: the cartesian
    /// product of event choices for the guard's action atoms, then every
    /// timepoint for what is still unbound.
    fn candidates(&self, vs: &[String], guard: &Formula, env: &Env) -> Vec<Env> {
        let mut base = env.clone();
        for v in vs {
            base.remove(v);
        }
        let mut envs = vec![base];
        let conjs = top_conjuncts(guard);
        for c in &conjs {
            if let Formula::Event { kind, args, at } = c {
                let evs: Vec<&TraceEvent> = self
                    .state
                    .events
                    .iter()
                    .filter(|e| e.kind == *kind)
                    .collect();
                let mut next = Vec::new();
                for e0 in &envs {
                    for e in &evs {
                        let mut x = e0.clone();
                        match Self::time(&x, at) {
                            Some(t) if t != e.time => continue,
                            Some(_) => {}
                            None => {
                                x.insert(at.clone(), Value::Time(e.time));
                            }
                        }
                        if args
                            .iter()
                            .zip(&e.params)
                            .all(|(p, t)| match_pattern(p, t, &mut x))
                        {
                            next.push(x);
                        }
                    }
                }
                envs = next;
            }
        }
        // equations binding a variable to a term
        for c in &conjs {
            if let Formula::Eq(a, b) = c {
                for x in envs.iter_mut() {
                    for (var, other) in [(a, b), (b, a)] {
                        if let Pattern::Var(v) = var {
                            if vs.contains(v) && !x.contains_key(v) {
                                if let Some(t) = other.subst(x) {
                                    x.insert(v.clone(), Value::Term(self.theory.normalize(&t)));
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for x in envs {
            let open: Vec<&String> = vs.iter().filter(|v| !x.contains_key(*v)).collect();
            let mut partial = vec![x];
            for v in open {
                assert!(v.starts_with('#'), "term variable {v} has no finite domain");
                partial = partial
                    .into_iter()
                    .flat_map(|p| {
                        (1..=self.len()).map(move |t| {
                            let mut q = p.clone();
                            q.insert(v.clone(), Value::Time(t));
                            q
                        })
                    })
                    .collect();
            }
            out.extend(partial);
        }
        out
    }

    pub fn eval(&self, f: &Formula, env: &Env) -> bool {
        match f {
            Formula::Event { kind, args, at } => {
                let Some(t) = Self::time(env, at) else {
                    return false;
                };
                let Some(ps) = args
                    .iter()
                    .map(|p| p.subst(env))
                    .collect::<Option<Vec<_>>>()
                else {
                    return false;
                };
                self.state
                    .events
                    .iter()
                    .any(|e| e.kind == *kind && e.time == t && e.params == ps)
            }
            Formula::K { term, at } => match (term.subst(env), Self::time(env, at)) {
                (Some(t), Some(j)) => self.known_at(&t, j),
                _ => false,
            },
            Formula::Less(a, b) => match (Self::time(env, a), Self::time(env, b)) {
                (Some(x), Some(y)) => x < y,
                _ => false,
            },
            Formula::TimeEq(a, b) => {
                Self::time(env, a).is_some() && Self::time(env, a) == Self::time(env, b)
            }
            Formula::Eq(a, b) => match (a.subst(env), b.subst(env)) {
                (Some(x), Some(y)) => self.theory.normalize(&x) == self.theory.normalize(&y),
                _ => false,
            },
            Formula::Not(a) => !self.eval(a, env),
            Formula::And(xs) => xs.iter().all(|x| self.eval(x, env)),
            Formula::Or(xs) => xs.iter().any(|x| self.eval(x, env)),
            Formula::Implies(a, b) => !self.eval(a, env) || self.eval(b, env),
            Formula::Ex(vs, body) => self
                .candidates(vs, body, env)
                .iter()
                .any(|e| self.eval(body, e)),
            Formula::All(vs, body) => {
                let guard = match &**body {
                    Formula::Implies(p, _) => &**p,
                    other => other,
                };
                self.candidates(vs, guard, env)
                    .iter()
                    .all(|e| self.eval(body, e))
            }
        }
    }
}

/// Free variables check for the oracle's own sanity.
pub fn closed(f: &Formula) -> bool {
    fn fv(f: &Formula, bound: &mut Vec<String>, ok: &mut bool) {
        let check = |v: &String, bound: &Vec<String>, ok: &mut bool| {
            if !bound.contains(v) {
                *ok = false
            }
        };
        match f {
            Formula::Event { args, at, .. } => {
                let mut s = BTreeSet::new();
                args.iter().for_each(|a| pattern_vars(a, &mut s));
                s.iter().for_each(|v| check(v, bound, ok));
                check(at, bound, ok);
            }
            Formula::K { term, at } => {
                let mut s = BTreeSet::new();
                pattern_vars(term, &mut s);
                s.iter().for_each(|v| check(v, bound, ok));
                check(at, bound, ok);
            }
            Formula::Less(a, b) | Formula::TimeEq(a, b) => {
                check(a, bound, ok);
                check(b, bound, ok);
            }
            Formula::Eq(a, b) => {
                let mut s = BTreeSet::new();
                pattern_vars(a, &mut s);
                pattern_vars(b, &mut s);
                s.iter().for_each(|v| check(v, bound, ok));
            }
            Formula::Not(a) => fv(a, bound, ok),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| fv(x, bound, ok)),
            Formula::Implies(a, b) => {
                fv(a, bound, ok);
                fv(b, bound, ok);
            }
            Formula::All(vs, a) | Formula::Ex(vs, a) => {
                let n = bound.len();
                bound.extend(vs.iter().cloned());
                fv(a, bound, ok);
                bound.truncate(n);
            }
        }
    }
    let mut ok = true;
    fv(f, &mut Vec::new(), &mut ok);
    ok
}

/// What the naive walk concludes: `true` when the lemma holds (all-traces)
/// or a witness exists (exists-trace), plus the number of nodes visited.
pub fn naive_verdict(sc: &Scenario, kind: LemmaKind, f: &Formula) -> (bool, u64) {
    let mut hit = false;
    let nodes = naive_walk(sc, &mut |st| {
        let ev = NaiveEval {
            state: st,
            theory: sc.theory,
            depth: sc.bounds.depth,
        };
        let v = ev.eval(f, &BTreeMap::new());
        hit = match kind {
            LemmaKind::AllTraces => !v,
            LemmaKind::ExistsTrace => v,
        };
        hit
    });
    let answer = match kind {
        LemmaKind::AllTraces => !hit,
        LemmaKind::ExistsTrace => hit,
    };
    (answer, nodes)
}
