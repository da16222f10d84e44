//! The cryptographic interface the protocol roles are written against, and
//! its symbolic implementation.

use std::fmt::Debug;

use thiserror::Error;

use crate::term::{Symbol, Term, Theory};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("scalar out of range [1, n-1]")]
    ScalarOutOfRange,
    #[error("invalid curve point")]
    InvalidPoint,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("bad argument: {0}")]
    BadArgument(&'static str),
}

/// Cryptographic operations used by pairing, key rotation, report creation
/// and report retrieval.
///
/// `ecdh(a, pub_of(b))` must equal `ecdh(b, pub_of(a))`, the open operations
/// must invert the seal operations under matching key material, and
/// `sk_next`/`d_next` must be deterministic.
pub trait CryptoProvider {
    type Secret: Clone + PartialEq + Debug;
    type SymKey: Clone + PartialEq + Debug;
    type Pub: Clone + PartialEq + Debug;
    type Shared: Clone + PartialEq + Debug;
    type EncKey: Clone + PartialEq + Debug;
    type Iv: Clone + PartialEq + Debug;
    type Plain: Clone + PartialEq + Debug;
    type Cipher: Clone + PartialEq + Debug;
    type Digest: Clone + Ord + Debug;

    /// A fresh private scalar. `label` names the value in symbolic backends.
    fn fresh_secret(&mut self, label: &str) -> Self::Secret;
    fn fresh_sym_key(&mut self, label: &str) -> Self::SymKey;

    fn pub_of(&self, secret: &Self::Secret) -> Self::Pub;
    fn sk_next(&self, sk: &Self::SymKey) -> Self::SymKey;
    fn d_next(&self, d0: &Self::Secret, sk: &Self::SymKey) -> Result<Self::Secret, CryptoError>;
    fn ecdh(&self, secret: &Self::Secret, peer: &Self::Pub) -> Result<Self::Shared, CryptoError>;
    fn key_of(&self, shared: &Self::Shared, beacon: &Self::Pub) -> Self::EncKey;
    fn iv_of(&self, shared: &Self::Shared, beacon: &Self::Pub) -> Self::Iv;
    fn aead_seal(&self, key: &Self::EncKey, plain: &Self::Plain, iv: &Self::Iv) -> Self::Cipher;
    fn aead_open(
        &self,
        key: &Self::EncKey,
        cipher: &Self::Cipher,
        iv: &Self::Iv,
    ) -> Result<Self::Plain, CryptoError>;
    fn sym_seal(&self, key: &Self::EncKey, plain: &Self::Plain) -> Self::Plain;
    fn sym_open(
        &self,
        key: &Self::EncKey,
        sealed: &Self::Plain,
    ) -> Result<Self::Plain, CryptoError>;
    fn pair(&self, a: &Self::Plain, b: &Self::Plain) -> Self::Plain;
    fn unpair(&self, p: &Self::Plain) -> Result<(Self::Plain, Self::Plain), CryptoError>;
    fn hash(&self, beacon: &Self::Pub) -> Self::Digest;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FreshIds {
    Counter(u32),
    Fixed(u32),
}

/// Perfect-cryptography provider over [`Term`]s. Decryption succeeds only
/// when the destructor application rewrites away; a stuck application is a
/// failure.
#[derive(Clone, Debug)]
pub struct SymbolicProvider {
    theory: Theory,
    ids: FreshIds,
}

impl Default for SymbolicProvider {
    fn default() -> Self {
        SymbolicProvider::new(Theory::default())
    }
}

impl SymbolicProvider {
    /// Fresh names get ids 1, 2, 3, ... in order of creation.
    pub fn new(theory: Theory) -> Self {
        SymbolicProvider {
            theory,
            ids: FreshIds::Counter(1),
        }
    }

    /// Every fresh name gets the same id; names are told apart by label.
    /// Used by the trace engine so that a rule instance always produces the
    /// same names regardless of interleaving.
    pub fn scoped(theory: Theory, id: u32) -> Self {
        SymbolicProvider {
            theory,
            ids: FreshIds::Fixed(id),
        }
    }

    pub fn theory(&self) -> Theory {
        self.theory
    }

    fn next_id(&mut self) -> u32 {
        match &mut self.ids {
            FreshIds::Counter(n) => {
                let id = *n;
                *n += 1;
                id
            }
            FreshIds::Fixed(id) => *id,
        }
    }

    fn norm(&self, t: Term) -> Term {
        self.theory.normalize(&t)
    }

    fn opened(&self, t: Term, destructor: Symbol) -> Result<Term, CryptoError> {
        let t = self.norm(t);
        if t.head() == Some(destructor) {
            Err(CryptoError::AuthenticationFailed)
        } else {
            Ok(t)
        }
    }
}

impl CryptoProvider for SymbolicProvider {
    type Secret = Term;
    type SymKey = Term;
    type Pub = Term;
    type Shared = Term;
    type EncKey = Term;
    type Iv = Term;
    type Plain = Term;
    type Cipher = Term;
    type Digest = Term;

    fn fresh_secret(&mut self, label: &str) -> Term {
        let id = self.next_id();
        Term::fresh(label, id)
    }

    fn fresh_sym_key(&mut self, label: &str) -> Term {
        self.fresh_secret(label)
    }

    fn pub_of(&self, secret: &Term) -> Term {
        Term::pk(secret.clone())
    }

    fn sk_next(&self, sk: &Term) -> Term {
        Term::sk_fn(sk.clone())
    }

    fn d_next(&self, d0: &Term, sk: &Term) -> Result<Term, CryptoError> {
        Ok(Term::di_fn(d0.clone(), sk.clone()))
    }

    fn ecdh(&self, secret: &Term, peer: &Term) -> Result<Term, CryptoError> {
        Ok(self.norm(Term::ss_fn(secret.clone(), peer.clone())))
    }

    fn key_of(&self, shared: &Term, beacon: &Term) -> Term {
        Term::key_gen(shared.clone(), beacon.clone())
    }

    fn iv_of(&self, shared: &Term, beacon: &Term) -> Term {
        Term::nonce_gen(shared.clone(), beacon.clone())
    }

    fn aead_seal(&self, key: &Term, plain: &Term, iv: &Term) -> Term {
        Term::aead_enc(key.clone(), plain.clone(), iv.clone())
    }

    fn aead_open(&self, key: &Term, cipher: &Term, iv: &Term) -> Result<Term, CryptoError> {
        self.opened(
            Term::aead_authdec(key.clone(), cipher.clone(), iv.clone()),
            Symbol::AeadAuthDec,
        )
    }

    fn sym_seal(&self, key: &Term, plain: &Term) -> Term {
        Term::senc(plain.clone(), key.clone())
    }

    fn sym_open(&self, key: &Term, sealed: &Term) -> Result<Term, CryptoError> {
        self.opened(Term::sdec(sealed.clone(), key.clone()), Symbol::Sdec)
    }

    fn pair(&self, a: &Term, b: &Term) -> Term {
        Term::pair(a.clone(), b.clone())
    }

    fn unpair(&self, p: &Term) -> Result<(Term, Term), CryptoError> {
        match self.norm(p.clone()) {
            Term::Pair(a, b) => Ok(((*a).clone(), (*b).clone())),
            _ => Err(CryptoError::Malformed("not a pair")),
        }
    }

    fn hash(&self, beacon: &Term) -> Term {
        Term::h(beacon.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse;

    #[test]
    fn fresh_names_by_counter_and_scope() {
        let mut p = SymbolicProvider::default();
        assert_eq!(p.fresh_secret("d0"), Term::fresh("d0", 1));
        assert_eq!(p.fresh_sym_key("SK0"), Term::fresh("SK0", 2));
        let mut s = SymbolicProvider::scoped(Theory::default(), 7);
        assert_eq!(s.fresh_secret("d_f"), Term::fresh("d_f", 7));
        assert_eq!(s.fresh_secret("loc"), Term::fresh("loc", 7));
    }

    #[test]
    fn ecdh_agrees_both_ways() {
        let p = SymbolicProvider::default();
        let (a, b) = (parse("~a_1").unwrap(), parse("~b_2").unwrap());
        assert_eq!(
            p.ecdh(&a, &p.pub_of(&b)).unwrap(),
            p.ecdh(&b, &p.pub_of(&a)).unwrap()
        );
    }

    #[test]
    fn open_fails_on_mismatch() {
        let p = SymbolicProvider::default();
        let (k, k2, m, iv) = (
            Term::public("k"),
            Term::public("k2"),
            Term::public("m"),
            Term::public("iv"),
        );
        let c = p.aead_seal(&k, &m, &iv);
        assert_eq!(p.aead_open(&k, &c, &iv).unwrap(), m);
        assert_eq!(
            p.aead_open(&k2, &c, &iv),
            Err(CryptoError::AuthenticationFailed)
        );
        assert_eq!(
            p.aead_open(&k, &c, &k2),
            Err(CryptoError::AuthenticationFailed)
        );
        let s = p.sym_seal(&k, &m);
        assert_eq!(p.sym_open(&k, &s).unwrap(), m);
        assert!(p.sym_open(&k2, &s).is_err());
        assert!(p.unpair(&m).is_err());
    }
}
