//! Algebraic invariants as property tests.

mod common;

use common::{knowledge, random_term};
use findmy_verif::concrete::{aead_open, aead_seal, x963_kdf};
use findmy_verif::term::{equal_mod_e, normalize, parse, render, Term, Theory};
use findmy_verif::trace::{builtin_lemmas, control_lemmas, Formula};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn term(seed: u64, h: u32) -> Term {
    random_term(&mut ChaCha8Rng::seed_from_u64(seed), h)
}

proptest! {
    #[test]
    fn render_parse_round_trip(seed in any::<u64>()) {
        let t = term(seed, 4);
        prop_assert_eq!(parse(&render(&t)).unwrap(), t);
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let n = normalize(&term(seed, 4));
        prop_assert_eq!(normalize(&n), n.clone());
        prop_assert!(Theory::default().is_normal(&n));
    }

    #[test]
    fn ecdh_is_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (term(a, 2), term(b, 2));
        let l = Term::ss_fn(x.clone(), Term::pk(y.clone()));
        let r = Term::ss_fn(y, Term::pk(x));
        prop_assert!(equal_mod_e(&l, &r));
        prop_assert_eq!(normalize(&l), normalize(&r));
    }

    #[test]
    fn destructors_cancel(a in any::<u64>(), b in any::<u64>()) {
        let (m, k) = (term(a, 3), term(b, 2));
        prop_assert!(equal_mod_e(&Term::sdec(Term::senc(m.clone(), k.clone()), k.clone()), &m));
        prop_assert!(equal_mod_e(&Term::fst(Term::pair(m.clone(), k.clone())), &m));
        prop_assert!(equal_mod_e(&Term::snd(Term::pair(k.clone(), m.clone())), &m));
        let iv = Term::public("iv");
        let c = Term::aead_enc(k.clone(), m.clone(), iv.clone());
        prop_assert!(equal_mod_e(&Term::aead_dec(k.clone(), c.clone()), &m));
        prop_assert!(equal_mod_e(&Term::aead_authdec(k, c, iv), &m));
    }

    #[test]
    fn deduction_is_monotone(seeds in prop::collection::vec(any::<u64>(), 1..5), t in any::<u64>(), extra in any::<u64>(), d in 0u32..4) {
        let th = Theory::default();
        let kb_terms: Vec<Term> = seeds.iter().map(|s| term(*s, 3)).collect();
        let target = term(t, 3);
        let small = knowledge(th, &kb_terms);
        let mut bigger = kb_terms.clone();
        bigger.push(term(extra, 3));
        let big = knowledge(th, &bigger);
        if small.can_derive(&target, d).derivable() {
            prop_assert!(small.can_derive(&target, d + 1).derivable());
            prop_assert!(big.can_derive(&target, d).derivable());
        }
        for k in small.terms() {
            prop_assert!(small.can_derive(k, 0).derivable());
        }
    }

    #[test]
    fn aead_round_trip_and_tamper(key in any::<[u8; 16]>(), iv in any::<[u8; 16]>(), msg in prop::collection::vec(any::<u8>(), 0..64), flip in any::<usize>()) {
        let c = aead_seal(&key, &msg, &iv);
        prop_assert_eq!(c.len(), msg.len() + 16);
        prop_assert_eq!(aead_open(&key, &c, &iv).unwrap(), msg);
        let mut bad = c.clone();
        let i = flip % bad.len();
        bad[i] ^= 1;
        prop_assert!(aead_open(&key, &bad, &iv).is_err());
        let mut iv2 = iv;
        iv2[15] ^= 0x80;
        prop_assert!(aead_open(&key, &c, &iv2).is_err());
    }

    #[test]
    fn kdf_output_extends(secret in prop::collection::vec(any::<u8>(), 1..40), info in prop::collection::vec(any::<u8>(), 0..20), n in 1usize..100, m in 1usize..100) {
        let (short, long) = (n.min(m), n.max(m));
        let a = x963_kdf(&secret, &info, short).unwrap();
        let b = x963_kdf(&secret, &info, long).unwrap();
        prop_assert_eq!(&b[..short], &a[..]);
    }
}

#[test]
fn lemma_formulas_survive_display() {
    for l in builtin_lemmas().into_iter().chain(control_lemmas()) {
        let shown = l.formula.to_string();
        assert_eq!(Formula::parse(&shown).unwrap(), l.formula, "{}", l.name);
    }
}
