//! Symbolic message terms and the equational theory they are compared under.
//!
//! Terms are built from public names, fresh names, pairs and a fixed set of
//! function symbols. Equality modulo the theory is decided by rewriting both
//! sides to normal form and comparing syntactically.
//!
//! Text form: identifiers `[A-Za-z0-9_]+`, applications `f(t1,...,tn)`,
//! pairs `<t1,t2>` (longer tuples nest to the right) and fresh names `~label_id`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Function symbols of the message algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Pk,
    H,
    Senc,
    Sdec,
    Fst,
    Snd,
    SkFn,
    DiFn,
    SsFn,
    KeyGen,
    NonceGen,
    AeadEnc,
    AeadAuthDec,
    AeadDec,
}

impl Symbol {
    pub const ALL: [Symbol; 14] = [
        Symbol::Pk,
        Symbol::H,
        Symbol::Senc,
        Symbol::Sdec,
        Symbol::Fst,
        Symbol::Snd,
        Symbol::SkFn,
        Symbol::DiFn,
        Symbol::SsFn,
        Symbol::KeyGen,
        Symbol::NonceGen,
        Symbol::AeadEnc,
        Symbol::AeadAuthDec,
        Symbol::AeadDec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symbol::Pk => "pk",
            Symbol::H => "h",
            Symbol::Senc => "senc",
            Symbol::Sdec => "sdec",
            Symbol::Fst => "fst",
            Symbol::Snd => "snd",
            Symbol::SkFn => "SK_fn",
            Symbol::DiFn => "di_fn",
            Symbol::SsFn => "SS_fn",
            Symbol::KeyGen => "KeyGen",
            Symbol::NonceGen => "NonceGen",
            Symbol::AeadEnc => "AEADenc",
            Symbol::AeadAuthDec => "AEADauthdec",
            Symbol::AeadDec => "AEAD_dec",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Symbol::Pk | Symbol::H | Symbol::Fst | Symbol::Snd | Symbol::SkFn => 1,
            Symbol::Senc
            | Symbol::Sdec
            | Symbol::DiFn
            | Symbol::SsFn
            | Symbol::KeyGen
            | Symbol::NonceGen
            | Symbol::AeadDec => 2,
            Symbol::AeadEnc | Symbol::AeadAuthDec => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Symbol> {
        Symbol::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Constructors are the symbols an intruder may apply freely when
    /// composing messages. Destructors only ever appear in analysis.
    pub fn is_constructor(self) -> bool {
        !matches!(
            self,
            Symbol::Sdec | Symbol::Fst | Symbol::Snd | Symbol::AeadAuthDec | Symbol::AeadDec
        )
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A function application whose argument count always matches the symbol's
/// arity. The fields are private so that malformed applications cannot be
/// built outside this module.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Application {
    sym: Symbol,
    args: Arc<[Term]>,
}

impl Application {
    pub fn symbol(&self) -> Symbol {
        self.sym
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }
}

/// A symbolic message. Subterms are shared, so clones are cheap.
///
/// The derived ordering (variant tag, then label, then arguments left to
/// right) is the fixed total order used to canonicalise `SS_fn` arguments.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Public(String),
    Fresh(String, u32),
    Pair(Arc<Term>, Arc<Term>),
    App(Application),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("{symbol} expects {expected} argument(s), got {got}")]
    Arity {
        symbol: Symbol,
        expected: usize,
        got: usize,
    },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

impl Term {
    pub fn public(label: impl Into<String>) -> Term {
        Term::Public(label.into())
    }

    pub fn fresh(label: impl Into<String>, id: u32) -> Term {
        Term::Fresh(label.into(), id)
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Arc::new(a), Arc::new(b))
    }

    pub fn app(sym: Symbol, args: Vec<Term>) -> Result<Term, TermError> {
        if args.len() != sym.arity() {
            return Err(TermError::Arity {
                symbol: sym,
                expected: sym.arity(),
                got: args.len(),
            });
        }
        Ok(Term::App(Application {
            sym,
            args: args.into(),
        }))
    }

    fn raw(sym: Symbol, args: Vec<Term>) -> Term {
        debug_assert_eq!(args.len(), sym.arity());
        Term::App(Application {
            sym,
            args: args.into(),
        })
    }

    pub fn pk(d: Term) -> Term {
        Term::raw(Symbol::Pk, vec![d])
    }
    pub fn h(x: Term) -> Term {
        Term::raw(Symbol::H, vec![x])
    }
    pub fn senc(m: Term, k: Term) -> Term {
        Term::raw(Symbol::Senc, vec![m, k])
    }
    pub fn sdec(c: Term, k: Term) -> Term {
        Term::raw(Symbol::Sdec, vec![c, k])
    }
    pub fn fst(p: Term) -> Term {
        Term::raw(Symbol::Fst, vec![p])
    }
    pub fn snd(p: Term) -> Term {
        Term::raw(Symbol::Snd, vec![p])
    }
    pub fn sk_fn(sk: Term) -> Term {
        Term::raw(Symbol::SkFn, vec![sk])
    }
    pub fn di_fn(d0: Term, sk: Term) -> Term {
        Term::raw(Symbol::DiFn, vec![d0, sk])
    }
    pub fn ss_fn(secret: Term, public: Term) -> Term {
        Term::raw(Symbol::SsFn, vec![secret, public])
    }
    pub fn key_gen(ss: Term, p: Term) -> Term {
        Term::raw(Symbol::KeyGen, vec![ss, p])
    }
    pub fn nonce_gen(ss: Term, p: Term) -> Term {
        Term::raw(Symbol::NonceGen, vec![ss, p])
    }
    pub fn aead_enc(k: Term, pt: Term, aad: Term) -> Term {
        Term::raw(Symbol::AeadEnc, vec![k, pt, aad])
    }
    pub fn aead_authdec(k: Term, c: Term, aad: Term) -> Term {
        Term::raw(Symbol::AeadAuthDec, vec![k, c, aad])
    }
    pub fn aead_dec(k: Term, c: Term) -> Term {
        Term::raw(Symbol::AeadDec, vec![k, c])
    }

    /// Returns the symbol and arguments when this is an application.
    pub fn as_app(&self) -> Option<(Symbol, &[Term])> {
        match self {
            Term::App(a) => Some((a.sym, &a.args)),
            _ => None,
        }
    }

    pub fn head(&self) -> Option<Symbol> {
        self.as_app().map(|(s, _)| s)
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Term::Public(_) | Term::Fresh(..))
    }

    pub fn node_count(&self) -> usize {
        match self {
            Term::Public(_) | Term::Fresh(..) => 1,
            Term::Pair(a, b) => 1 + a.node_count() + b.node_count(),
            Term::App(a) => 1 + a.args.iter().map(Term::node_count).sum::<usize>(),
        }
    }

    /// Height of the term tree; atoms have height 0.
    pub fn height(&self) -> usize {
        match self {
            Term::Public(_) | Term::Fresh(..) => 0,
            Term::Pair(a, b) => 1 + a.height().max(b.height()),
            Term::App(a) => 1 + a.args.iter().map(Term::height).max().unwrap_or(0),
        }
    }

    /// Immediate children, in argument order.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Public(_) | Term::Fresh(..) => Vec::new(),
            Term::Pair(a, b) => vec![a, b],
            Term::App(a) => a.args.iter().collect(),
        }
    }

    /// Collects every subterm (including `self`) without normalising.
    pub fn collect_subterms(&self, out: &mut BTreeSet<Term>) {
        if out.insert(self.clone()) {
            for c in self.children() {
                c.collect_subterms(out);
            }
        }
    }

    /// Number of nested `SK_fn` applications; this is the epoch index of a
    /// symbolic rolling symmetric key.
    pub fn sk_chain_len(&self) -> u32 {
        match self.as_app() {
            Some((Symbol::SkFn, [inner])) => 1 + inner.sk_chain_len(),
            _ => 0,
        }
    }
}

/// The rewrite system. Destructor equations are always on; the ECDH
/// canonicalisation can be switched off to observe its effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Theory {
    pub ecdh_canonicalization: bool,
}

impl Default for Theory {
    fn default() -> Self {
        Theory {
            ecdh_canonicalization: true,
        }
    }
}

impl Theory {
    pub fn without_ecdh() -> Self {
        Theory {
            ecdh_canonicalization: false,
        }
    }

    /// Rewrites `t` to its unique normal form (innermost strategy).
    pub fn normalize(&self, t: &Term) -> Term {
        match t {
            Term::Public(_) | Term::Fresh(..) => t.clone(),
            Term::Pair(a, b) => Term::pair(self.normalize(a), self.normalize(b)),
            Term::App(a) => {
                let args = a.args.iter().map(|x| self.normalize(x)).collect();
                self.reduce_root(a.sym, args)
            }
        }
    }

    // Arguments are already in normal form, so every right-hand side below
    // is too.
    fn reduce_root(&self, sym: Symbol, mut args: Vec<Term>) -> Term {
        match sym {
            Symbol::Sdec => {
                if let Some((Symbol::Senc, [m, k])) = args[0].as_app() {
                    if *k == args[1] {
                        return m.clone();
                    }
                }
            }
            Symbol::Fst | Symbol::Snd => {
                if let Term::Pair(x, y) = &args[0] {
                    return if sym == Symbol::Fst {
                        (**x).clone()
                    } else {
                        (**y).clone()
                    };
                }
            }
            Symbol::AeadAuthDec => {
                if let Some((Symbol::AeadEnc, [k, pt, aad])) = args[1].as_app() {
                    if *k == args[0] && *aad == args[2] {
                        return pt.clone();
                    }
                }
            }
            Symbol::AeadDec => {
                if let Some((Symbol::AeadEnc, [k, pt, _])) = args[1].as_app() {
                    if *k == args[0] {
                        return pt.clone();
                    }
                }
            }
            Symbol::SsFn if self.ecdh_canonicalization => {
                let swapped = match args[1].as_app() {
                    Some((Symbol::Pk, [b])) if *b < args[0] => Some(b.clone()),
                    _ => None,
                };
                if let Some(b) = swapped {
                    let a = std::mem::replace(&mut args[0], b);
                    args[1] = Term::pk(a);
                }
            }
            _ => {}
        }
        Term::raw(sym, args)
    }

    pub fn equal(&self, a: &Term, b: &Term) -> bool {
        self.normalize(a) == self.normalize(b)
    }

    /// Every subterm of the normal form of `t`, including the normal form itself.
    pub fn subterm_set(&self, t: &Term) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        self.normalize(t).collect_subterms(&mut out);
        out
    }

    pub fn is_normal(&self, t: &Term) -> bool {
        self.normalize(t) == *t
    }
}

/// Normal form under the full theory.
pub fn normalize(t: &Term) -> Term {
    Theory::default().normalize(t)
}

/// Equality modulo the full theory.
pub fn equal_mod_e(a: &Term, b: &Term) -> bool {
    Theory::default().equal(a, b)
}

pub fn subterm_set(t: &Term) -> BTreeSet<Term> {
    Theory::default().subterm_set(t)
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Public(l) => f.write_str(l),
            Term::Fresh(l, id) => write!(f, "~{l}_{id}"),
            Term::Pair(a, b) => write!(f, "<{a},{b}>"),
            Term::App(a) => {
                write!(f, "{}(", a.sym)?;
                for (i, x) in a.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Renders a term in the canonical text form.
pub fn render(t: &Term) -> String {
    t.to_string()
}

/// Parses the text form. Whitespace between tokens is ignored.
pub fn parse(src: &str) -> Result<Term, TermError> {
    let mut p = Parser::new(src);
    let t = p.term()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(t)
}

impl std::str::FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

pub(crate) fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Splits `label_id` at the last underscore when followed only by digits.
pub(crate) fn split_fresh(raw: &str) -> (String, u32) {
    if let Some(idx) = raw.rfind('_') {
        let (label, digits) = (&raw[..idx], &raw[idx + 1..]);
        if !label.is_empty() && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(id) = digits.parse() {
                return (label.to_string(), id);
            }
        }
    }
    (raw.to_string(), 0)
}

pub(crate) struct Parser<'a> {
    pub(crate) src: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> TermError {
        TermError::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    pub(crate) fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    pub(crate) fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    pub(crate) fn expect(&mut self, b: u8) -> Result<(), TermError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", b as char)))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<&'a str, TermError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && is_ident_byte(self.src[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected identifier"));
        }
        // identifiers are ASCII by construction
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier"))
    }

    pub(crate) fn term(&mut self) -> Result<Term, TermError> {
        match self.peek() {
            Some(b'~') => {
                self.pos += 1;
                let raw = self.ident()?;
                let (label, id) = split_fresh(raw);
                Ok(Term::Fresh(label, id))
            }
            Some(b'<') => {
                self.pos += 1;
                let mut items = vec![self.term()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    items.push(self.term()?);
                }
                self.expect(b'>')?;
                if items.len() < 2 {
                    return Err(self.error("a tuple needs at least two components"));
                }
                let mut it = items.into_iter().rev();
                let mut acc = it.next().expect("non-empty");
                for x in it {
                    acc = Term::pair(x, acc);
                }
                Ok(acc)
            }
            Some(_) => {
                let start = self.pos;
                let name = self.ident()?;
                if self.peek() == Some(b'(') {
                    let sym = Symbol::from_name(name).ok_or_else(|| TermError::Parse {
                        pos: start,
                        msg: format!("unknown function symbol '{name}'"),
                    })?;
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(b')') {
                        args.push(self.term()?);
                        while self.peek() == Some(b',') {
                            self.pos += 1;
                            args.push(self.term()?);
                        }
                    }
                    self.expect(b')')?;
                    Term::app(sym, args).map_err(|e| TermError::Parse {
                        pos: start,
                        msg: e.to_string(),
                    })
                } else {
                    Ok(Term::Public(name.to_string()))
                }
            }
            None => Err(self.error("unexpected end of input")),
        }
    }
}
