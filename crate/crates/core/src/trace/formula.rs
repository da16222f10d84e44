//! Trace formulas: a guarded first-order language over timestamped actions
//! and intruder knowledge.
//!
//! ```text
//! All L O d0 #i. LPFS1(L, O, d0, SK0, d, SK) @ #i
//!     ==> (not (Ex #j. K(d0) @ #j)) | (Ex #k. LtkReveal_d0(O, L, d0) @ #k)
//! ```
//!
//! Identifiers bound by a quantifier are variables; any other identifier is
//! a public name. Timepoint variables carry a leading `#`. Every quantified
//! variable must be bound by an action atom (or by `K(..) @ #t` for a
//! timepoint, or by `x = term`) in the guarding conjunction: the premise of
//! an implication for `All`, the body for `Ex`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::adversary::{Deriver, ProofTree};
use crate::event::{EventKind, TraceEvent};
use crate::term::{Parser, Symbol, Term, TermError, Theory};

use super::engine::State;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Var(String),
    Ground(Term),
    Pair(Box<Pattern>, Box<Pattern>),
    App(Symbol, Vec<Pattern>),
}

impl Pattern {
    fn from_term(t: &Term, scope: &BTreeSet<String>) -> Pattern {
        let p = match t {
            Term::Public(n) if scope.contains(n) => return Pattern::Var(n.clone()),
            Term::Public(_) | Term::Fresh(..) => return Pattern::Ground(t.clone()),
            Term::Pair(a, b) => Pattern::Pair(
                Box::new(Self::from_term(a, scope)),
                Box::new(Self::from_term(b, scope)),
            ),
            Term::App(_) => {
                let (s, args) = t.as_app().expect("application");
                Pattern::App(s, args.iter().map(|a| Self::from_term(a, scope)).collect())
            }
        };
        match p.ground() {
            Some(g) => Pattern::Ground(g),
            None => p,
        }
    }

    fn ground(&self) -> Option<Term> {
        self.subst(&Env::new())
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Pattern::Var(v) => {
                out.insert(v.clone());
            }
            Pattern::Ground(_) => {}
            Pattern::Pair(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Pattern::App(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    /// Instantiates the pattern; `None` if a variable is unbound.
    pub fn subst(&self, env: &Env) -> Option<Term> {
        match self {
            Pattern::Var(v) => match env.get(v) {
                Some(Value::Term(t)) => Some(t.clone()),
                _ => None,
            },
            Pattern::Ground(t) => Some(t.clone()),
            Pattern::Pair(a, b) => Some(Term::pair(a.subst(env)?, b.subst(env)?)),
            Pattern::App(s, args) => {
                let args = args
                    .iter()
                    .map(|a| a.subst(env))
                    .collect::<Option<Vec<_>>>()?;
                Some(Term::app(*s, args).expect("arity checked at parse time"))
            }
        }
    }

    /// Syntactic matching against a term in normal form, extending `env`.
    fn matches(&self, t: &Term, env: &mut Env) -> bool {
        match (self, t) {
            (Pattern::Var(v), _) => match env.get(v) {
                Some(Value::Term(b)) => b == t,
                Some(Value::Time(_)) => false,
                None => {
                    env.insert(v.clone(), Value::Term(t.clone()));
                    true
                }
            },
            (Pattern::Ground(g), _) => g == t,
            (Pattern::Pair(a, b), Term::Pair(x, y)) => a.matches(x, env) && b.matches(y, env),
            (Pattern::App(s, ps), Term::App(_)) => {
                let (ts, args) = t.as_app().expect("application");
                ts == *s && ps.iter().zip(args).all(|(p, a)| p.matches(a, env))
            }
            _ => false,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v) => f.write_str(v),
            Pattern::Ground(t) => write!(f, "{t}"),
            Pattern::Pair(a, b) => write!(f, "<{a},{b}>"),
            Pattern::App(s, args) => {
                write!(f, "{s}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Event {
        kind: EventKind,
        args: Vec<Pattern>,
        at: String,
    },
    K {
        term: Pattern,
        at: String,
    },
    Less(String, String),
    TimeEq(String, String),
    Eq(Pattern, Pattern),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    All(Vec<String>, Box<Formula>),
    Ex(Vec<String>, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Term(Term),
    Time(u32),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Term(t) => write!(f, "{t}"),
            Value::Time(t) => write!(f, "{t}"),
        }
    }
}

pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("variable '{0}' is not guarded by an action atom")]
    Unguarded(String),
    #[error("free variable '{0}'")]
    Free(String),
    #[error("universal quantifier over {0:?} needs the form `All .. . premise ==> conclusion`")]
    UniversalShape(Vec<String>),
    #[error("{kind} takes {expected} argument(s), got {got}")]
    EventArity {
        kind: EventKind,
        expected: usize,
        got: usize,
    },
}

impl From<TermError> for FormulaError {
    fn from(e: TermError) -> Self {
        match e {
            TermError::Parse { pos, msg } => FormulaError::Parse { pos, msg },
            other => FormulaError::Parse {
                pos: 0,
                msg: other.to_string(),
            },
        }
    }
}

impl Formula {
    pub fn parse(src: &str) -> Result<Formula, FormulaError> {
        let mut p = FParser {
            p: Parser::new(src),
            scope: Vec::new(),
        };
        let f = p.formula()?;
        p.p.skip_ws();
        if p.p.pos < p.p.src.len() {
            return Err(p.p.error("trailing input").into());
        }
        f.check_guarded(&BTreeSet::new())?;
        Ok(f)
    }

    /// Action kinds mentioned anywhere in the formula.
    pub fn event_kinds(&self) -> BTreeSet<EventKind> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| {
            if let Formula::Event { kind, .. } = f {
                out.insert(*kind);
            }
        });
        out
    }

    pub fn has_k(&self) -> bool {
        let mut any = false;
        self.walk(&mut |f| any |= matches!(f, Formula::K { .. }));
        any
    }

    /// Whether some `K` timepoint also occurs in a timepoint comparison.
    pub fn k_time_ordered(&self) -> bool {
        let mut k_times = BTreeSet::new();
        let mut compared = BTreeSet::new();
        self.walk(&mut |f| match f {
            Formula::K { at, .. } => {
                k_times.insert(at.clone());
            }
            Formula::Less(a, b) | Formula::TimeEq(a, b) => {
                compared.insert(a.clone());
                compared.insert(b.clone());
            }
            _ => {}
        });
        !k_times.is_disjoint(&compared)
    }

    fn walk(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(a) | Formula::All(_, a) | Formula::Ex(_, a) => a.walk(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.walk(f)),
            Formula::Implies(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Event { args, at, .. } => {
                args.iter().for_each(|a| a.vars(out));
                out.insert(at.clone());
            }
            Formula::K { term, at } => {
                term.vars(out);
                out.insert(at.clone());
            }
            Formula::Less(a, b) | Formula::TimeEq(a, b) => {
                out.insert(a.clone());
                out.insert(b.clone());
            }
            Formula::Eq(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Formula::Not(a) => a.free_vars(out),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.free_vars(out)),
            Formula::Implies(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Formula::All(vs, a) | Formula::Ex(vs, a) => {
                let mut inner = BTreeSet::new();
                a.free_vars(&mut inner);
                for v in vs {
                    inner.remove(v);
                }
                out.extend(inner);
            }
        }
    }

    fn conjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::And(xs) => xs.iter().flat_map(|x| x.conjuncts()).collect(),
            other => vec![other],
        }
    }

    /// Variables a generator atom can bind once `bound` is known, or `None`
    /// when the atom cannot act as a generator yet.
    fn binds(&self, bound: &BTreeSet<String>) -> Option<BTreeSet<String>> {
        match self {
            Formula::Event { args, at, .. } => {
                let mut out = BTreeSet::new();
                args.iter().for_each(|a| a.vars(&mut out));
                out.insert(at.clone());
                Some(out)
            }
            Formula::K { term, at } => {
                let mut need = BTreeSet::new();
                term.vars(&mut need);
                need.is_subset(bound).then(|| BTreeSet::from([at.clone()]))
            }
            Formula::Eq(a, b) => {
                for (x, y) in [(a, b), (b, a)] {
                    if let Pattern::Var(v) = x {
                        let mut need = BTreeSet::new();
                        y.vars(&mut need);
                        if need.is_subset(bound) {
                            return Some(BTreeSet::from([v.clone()]));
                        }
                    }
                }
                None
            }
            _ => None,
        }
    }

    fn guard(
        conjs: &[&Formula],
        outer: &BTreeSet<String>,
        vars: &[String],
    ) -> Result<BTreeSet<String>, FormulaError> {
        let mut bound = outer.clone();
        for v in vars {
            bound.remove(v);
        }
        loop {
            let before = bound.len();
            for c in conjs {
                if let Some(b) = c.binds(&bound) {
                    bound.extend(b);
                }
            }
            if bound.len() == before {
                break;
            }
        }
        for v in vars {
            if !bound.contains(v) {
                return Err(FormulaError::Unguarded(v.clone()));
            }
        }
        for c in conjs {
            c.check_guarded(&bound)?;
        }
        Ok(bound)
    }

    fn check_guarded(&self, bound: &BTreeSet<String>) -> Result<(), FormulaError> {
        match self {
            Formula::All(vs, body) => match body.as_ref() {
                Formula::Implies(prem, concl) => {
                    let inner = Self::guard(&prem.conjuncts(), bound, vs)?;
                    concl.check_guarded(&inner)
                }
                _ => Err(FormulaError::UniversalShape(vs.clone())),
            },
            Formula::Ex(vs, body) => Self::guard(&body.conjuncts(), bound, vs).map(|_| ()),
            Formula::Not(a) => a.check_guarded(bound),
            Formula::And(xs) | Formula::Or(xs) => {
                xs.iter().try_for_each(|x| x.check_guarded(bound))
            }
            Formula::Implies(a, b) => {
                a.check_guarded(bound)?;
                b.check_guarded(bound)
            }
            atom => {
                let mut fv = BTreeSet::new();
                atom.free_vars(&mut fv);
                match fv.into_iter().find(|v| !bound.contains(v)) {
                    Some(v) => Err(FormulaError::Free(v)),
                    None => Ok(()),
                }
            }
        }
    }
}

fn join<T: fmt::Display>(xs: &[T], sep: &str) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Event { kind, args, at } => write!(f, "{kind}({}) @ {at}", join(args, ", ")),
            Formula::K { term, at } => write!(f, "K({term}) @ {at}"),
            Formula::Less(a, b) => write!(f, "{a} < {b}"),
            Formula::TimeEq(a, b) => write!(f, "{a} = {b}"),
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::Not(a) => write!(f, "not ({a})"),
            Formula::And(xs) => write!(f, "({})", join(xs, " & ")),
            Formula::Or(xs) => write!(f, "({})", join(xs, " | ")),
            Formula::Implies(a, b) => write!(f, "({a} ==> {b})"),
            Formula::All(vs, a) => write!(f, "(All {}. {a})", vs.join(" ")),
            Formula::Ex(vs, a) => write!(f, "(Ex {}. {a})", vs.join(" ")),
        }
    }
}

struct FParser<'a> {
    p: Parser<'a>,
    scope: Vec<String>,
}

impl FParser<'_> {
    fn eat(&mut self, tok: &str) -> bool {
        self.p.skip_ws();
        if self.p.src[self.p.pos..].starts_with(tok.as_bytes()) {
            self.p.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.p.skip_ws();
        let rest = &self.p.src[self.p.pos..];
        if rest.starts_with(kw.as_bytes())
            && rest
                .get(kw.len())
                .is_none_or(|b| !crate::term::is_ident_byte(*b))
        {
            self.p.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn time_var(&mut self) -> Result<String, FormulaError> {
        if !self.eat("#") {
            return Err(self.p.error("expected timepoint variable '#name'").into());
        }
        Ok(format!("#{}", self.p.ident()?))
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        for (kw, is_all) in [("All", true), ("Ex", false)] {
            if self.keyword(kw) {
                let mut vars = Vec::new();
                loop {
                    self.p.skip_ws();
                    if self.eat(".") {
                        break;
                    }
                    if self.p.peek() == Some(b'#') {
                        vars.push(self.time_var()?);
                    } else {
                        vars.push(self.p.ident()?.to_string());
                    }
                }
                if vars.is_empty() {
                    return Err(self.p.error("quantifier binds no variables").into());
                }
                let depth = self.scope.len();
                self.scope.extend(vars.iter().cloned());
                let body = self.formula();
                self.scope.truncate(depth);
                let body = Box::new(body?);
                return Ok(if is_all {
                    Formula::All(vars, body)
                } else {
                    Formula::Ex(vars, body)
                });
            }
        }
        let lhs = self.disjunction()?;
        if self.eat("==>") {
            let rhs = self.formula()?;
            return Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut xs = vec![self.conjunction()?];
        while self.eat("|") {
            xs.push(self.conjunction()?);
        }
        Ok(if xs.len() == 1 {
            xs.pop().expect("one")
        } else {
            Formula::Or(xs)
        })
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut xs = vec![self.unary()?];
        while self.eat("&") {
            xs.push(self.unary()?);
        }
        Ok(if xs.len() == 1 {
            xs.pop().expect("one")
        } else {
            Formula::And(xs)
        })
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        if self.keyword("not") {
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        self.p.skip_ws();
        let rest = &self.p.src[self.p.pos..];
        if rest.starts_with(b"All") || rest.starts_with(b"Ex") {
            let save = self.p.pos;
            if self.keyword("All") || self.keyword("Ex") {
                self.p.pos = save;
                return self.formula();
            }
        }
        if self.eat("(") {
            let f = self.formula()?;
            if !self.eat(")") {
                return Err(self.p.error("expected ')'").into());
            }
            return Ok(f);
        }
        if self.p.peek() == Some(b'#') {
            let a = self.time_var()?;
            let cmp_less = if self.eat("<") {
                true
            } else if self.eat("=") {
                false
            } else {
                return Err(self.p.error("expected '<' or '=' after timepoint").into());
            };
            let b = self.time_var()?;
            return Ok(if cmp_less {
                Formula::Less(a, b)
            } else {
                Formula::TimeEq(a, b)
            });
        }
        let save = self.p.pos;
        if self.p.peek().is_some_and(crate::term::is_ident_byte) {
            let name = self.p.ident()?;
            if self.p.peek() == Some(b'(') && (name == "K" || EventKind::from_name(name).is_some())
            {
                self.p.pos += 1;
                let mut args = Vec::new();
                if self.p.peek() != Some(b')') {
                    args.push(self.pattern()?);
                    while self.eat(",") {
                        args.push(self.pattern()?);
                    }
                }
                if !self.eat(")") {
                    return Err(self.p.error("expected ')'").into());
                }
                if !self.eat("@") {
                    return Err(self.p.error("expected '@' after action").into());
                }
                let at = self.time_var()?;
                if name == "K" {
                    if args.len() != 1 {
                        return Err(FormulaError::Parse {
                            pos: save,
                            msg: "K takes exactly one argument".into(),
                        });
                    }
                    return Ok(Formula::K {
                        term: args.pop().expect("one"),
                        at,
                    });
                }
                let kind = EventKind::from_name(name).expect("checked");
                if args.len() != kind.arity() {
                    return Err(FormulaError::EventArity {
                        kind,
                        expected: kind.arity(),
                        got: args.len(),
                    });
                }
                return Ok(Formula::Event { kind, args, at });
            }
            self.p.pos = save;
        }
        let a = self.pattern()?;
        if !self.eat("=") {
            return Err(self.p.error("expected '='").into());
        }
        let b = self.pattern()?;
        Ok(Formula::Eq(a, b))
    }

    fn pattern(&mut self) -> Result<Pattern, FormulaError> {
        let t = self.p.term()?;
        let scope: BTreeSet<String> = self.scope.iter().cloned().collect();
        Ok(Pattern::from_term(&t, &scope))
    }
}

/// The part of a trace a formula is evaluated against.
pub struct TraceView<'a> {
    state: &'a State,
    theory: Theory,
    depth: u32,
    derivers: RefCell<HashMap<usize, Deriver<'a>>>,
}

impl<'a> TraceView<'a> {
    pub fn new(state: &'a State, theory: Theory, depth: u32) -> Self {
        TraceView {
            state,
            theory,
            depth,
            derivers: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> u32 {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn events(&self) -> &'a [TraceEvent] {
        &self.state.events
    }

    fn kb_len_at(&self, t: u32) -> usize {
        if t == 0 {
            0
        } else {
            self.state.kb_marks[(t - 1) as usize]
        }
    }

    /// Bounded derivability of `t` from the knowledge base as of timepoint
    /// `at`.
    pub fn derive_at(&self, t: &Term, at: u32) -> Option<ProofTree> {
        let n = self.kb_len_at(at);
        let mut ds = self.derivers.borrow_mut();
        let d = ds
            .entry(n)
            .or_insert_with(|| Deriver::new(self.theory, &self.state.kb.terms()[..n]));
        d.derive(t, self.depth).proof
    }

    fn known_at(&self, t: &Term, at: u32) -> bool {
        at >= 1 && at <= self.len() && self.derive_at(t, at).is_some()
    }

    fn time(env: &Env, v: &str) -> Option<u32> {
        match env.get(v) {
            Some(Value::Time(t)) => Some(*t),
            _ => None,
        }
    }

    /// Enumerates extensions of `env` satisfying all of `conjs`.
    fn solve(
        &self,
        conjs: &[&Formula],
        env: &mut Env,
        k: &mut dyn FnMut(&Env) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if conjs.is_empty() {
            return k(env);
        }
        let bound: BTreeSet<String> = env.keys().cloned().collect();
        let ready = |f: &Formula| {
            let mut fv = BTreeSet::new();
            f.free_vars(&mut fv);
            fv.is_subset(&bound)
        };
        // cheapest useful conjunct first: closed tests, then actions, then
        // equations, then knowledge
        let pick = conjs
            .iter()
            .position(|f| ready(f) && !matches!(f, Formula::K { .. }))
            .or_else(|| {
                conjs
                    .iter()
                    .position(|f| matches!(f, Formula::Event { .. }))
            })
            .or_else(|| {
                conjs
                    .iter()
                    .position(|f| matches!(f, Formula::Eq(..)) && f.binds(&bound).is_some())
            })
            .or_else(|| conjs.iter().position(|f| ready(f)))
            .or_else(|| conjs.iter().position(|f| f.binds(&bound).is_some()))
            .expect("guarded formula always has a usable conjunct");
        let f = conjs[pick];
        let rest: Vec<&Formula> = conjs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pick)
            .map(|(_, f)| *f)
            .collect();
        match f {
            Formula::Event { kind, args, at } => {
                for e in self.events().iter().filter(|e| e.kind == *kind) {
                    let mut ext = env.clone();
                    match Self::time(&ext, at) {
                        Some(t) if t != e.time => continue,
                        Some(_) => {}
                        None => {
                            ext.insert(at.clone(), Value::Time(e.time));
                        }
                    }
                    if args
                        .iter()
                        .zip(&e.params)
                        .all(|(p, t)| p.matches(t, &mut ext))
                    {
                        self.solve(&rest, &mut ext, k)?;
                    }
                }
                ControlFlow::Continue(())
            }
            Formula::K { term, at } if !bound.contains(at) => {
                let t = term.subst(env).expect("guarded");
                for j in 1..=self.len() {
                    if self.known_at(&t, j) {
                        let mut ext = env.clone();
                        ext.insert(at.clone(), Value::Time(j));
                        self.solve(&rest, &mut ext, k)?;
                    }
                }
                ControlFlow::Continue(())
            }
            Formula::Eq(a, b) if !ready(f) => {
                let (var, other) = match (a, b) {
                    (Pattern::Var(v), o) if !bound.contains(v) => (v, o),
                    (o, Pattern::Var(v)) => (v, o),
                    _ => unreachable!("picked as binder"),
                };
                let t = self.theory.normalize(&other.subst(env).expect("guarded"));
                let mut ext = env.clone();
                ext.insert(var.clone(), Value::Term(t));
                self.solve(&rest, &mut ext, k)
            }
            closed => {
                if self.eval(closed, env) {
                    self.solve(&rest, env, k)
                } else {
                    ControlFlow::Continue(())
                }
            }
        }
    }

    fn exists(&self, conjs: &[&Formula], env: &Env) -> bool {
        let mut e = env.clone();
        self.solve(conjs, &mut e, &mut |_| ControlFlow::Break(()))
            .is_break()
    }

    fn scoped(env: &Env, vars: &[String]) -> Env {
        let mut e = env.clone();
        for v in vars {
            e.remove(v);
        }
        e
    }

    /// Truth value under a closing environment.
    pub fn eval(&self, f: &Formula, env: &Env) -> bool {
        match f {
            Formula::K { term, at } if env.contains_key(at) => {
                match (term.subst(env), Self::time(env, at)) {
                    (Some(t), Some(j)) => self.known_at(&t, j),
                    _ => false,
                }
            }
            Formula::Event { .. } | Formula::K { .. } => self.exists(&[f], env),
            Formula::Less(a, b) => match (Self::time(env, a), Self::time(env, b)) {
                (Some(x), Some(y)) => x < y,
                _ => false,
            },
            Formula::TimeEq(a, b) => {
                Self::time(env, a).is_some() && Self::time(env, a) == Self::time(env, b)
            }
            Formula::Eq(a, b) => match (a.subst(env), b.subst(env)) {
                (Some(x), Some(y)) => self.theory.equal(&x, &y),
                _ => false,
            },
            Formula::Not(a) => !self.eval(a, env),
            Formula::And(_) => self.exists(&f.conjuncts(), env),
            Formula::Or(xs) => xs.iter().any(|x| self.eval(x, env)),
            Formula::Implies(a, b) => !self.eval(a, env) || self.eval(b, env),
            Formula::Ex(vs, body) => self.exists(&body.conjuncts(), &Self::scoped(env, vs)),
            Formula::All(vs, body) => self.counterexample(vs, body, env).is_none(),
        }
    }

    fn counterexample(&self, vs: &[String], body: &Formula, env: &Env) -> Option<Env> {
        let Formula::Implies(prem, concl) = body else {
            unreachable!("checked at parse time")
        };
        let mut found = None;
        let mut e = Self::scoped(env, vs);
        let _ = self.solve(&prem.conjuncts(), &mut e, &mut |assign| {
            if self.eval(concl, assign) {
                ControlFlow::Continue(())
            } else {
                found = Some(assign.clone());
                ControlFlow::Break(())
            }
        });
        found
    }

    /// For `All ..` formulas: an assignment falsifying the body, if any.
    pub fn falsify(&self, f: &Formula) -> Option<Env> {
        match f {
            Formula::All(vs, body) => self.counterexample(vs, body, &Env::new()),
            other => (!self.eval(other, &Env::new())).then(Env::new),
        }
    }

    /// For `Ex ..` formulas: a satisfying assignment, if any.
    pub fn satisfy(&self, f: &Formula) -> Option<Env> {
        match f {
            Formula::Ex(vs, body) => {
                let mut found = None;
                let mut e = Self::scoped(&Env::new(), vs);
                let _ = self.solve(&body.conjuncts(), &mut e, &mut |a| {
                    found = Some(a.clone());
                    ControlFlow::Break(())
                });
                found
            }
            other => self.eval(other, &Env::new()).then(Env::new),
        }
    }

    /// Proofs for every `K` atom of `f` that is ground under `env` and
    /// derivable from the final knowledge base.
    pub fn knowledge_proofs(&self, f: &Formula, env: &Env) -> Vec<(Term, ProofTree)> {
        let mut out: Vec<(Term, ProofTree)> = Vec::new();
        f.walk(&mut |g| {
            if let Formula::K { term, .. } = g {
                if let Some(t) = term.subst(env) {
                    if out.iter().all(|(x, _)| *x != t) {
                        if let Some(p) = self.derive_at(&t, self.len()) {
                            out.push((t, p));
                        }
                    }
                }
            }
        });
        out
    }
}
