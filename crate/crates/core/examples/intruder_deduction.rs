//! What a Dolev-Yao intruder can compute from what it has seen.
//!
//! Prints a proof tree for each derivable goal and the depth at which it
//! first becomes derivable.

use findmy_verif::adversary::KnowledgeBase;
use findmy_verif::term::{parse, Theory};

fn main() {
    let mut kb = KnowledgeBase::new(Theory::default());
    // a leaked epoch key, a beacon and a finder's report
    for src in [
        "~d1",
        "pk(~d1)",
        "pk(~dF)",
        "AEADenc(KeyGen(SS_fn(~dF, pk(~d1)), pk(~d1)), <senc(~loc, KeyGen(SS_fn(~dF, pk(~d1)), pk(~d1))), ~tF>, NonceGen(SS_fn(~dF, pk(~d1)), pk(~d1)))",
    ] {
        kb.observe(&parse(src).expect("valid term"));
    }
    println!("intruder knowledge:");
    for t in kb.terms() {
        println!("  {t}");
    }

    for goal in [
        "~loc",
        "~tF",
        "~dF",
        "<~tF, pk(~d1)>",
        "SS_fn(~d1, pk(~dF))",
    ] {
        let t = parse(goal).expect("valid term");
        let first = (0..=8).find(|&d| kb.can_derive(&t, d).derivable());
        println!();
        match first {
            Some(d) => {
                let proof = kb.can_derive(&t, d).proof.expect("derivable");
                println!("{goal}: derivable at depth {d}");
                print!("{proof}");
                assert_eq!(proof.replay(&kb).expect("proof replays"), t);
            }
            None => println!("{goal}: not derivable up to depth 8"),
        }
    }
}
