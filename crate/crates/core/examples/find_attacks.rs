//! Deliberately broken properties and models, to show the checker finds
//! attacks when they exist.
//!
//! 1. d0 secrecy without its reveal exception: the intruder learns d0 via
//!    LtkReveal_d0 and the counterexample trace says so.
//! 2. PFS for SK_i with SK_i itself revealed.
//! 3. The sanity lemma without the ECDH equation: the owner can never
//!    decrypt, so no witness exists.

use findmy_verif::term::Theory;
use findmy_verif::trace::{check_lemma, find_lemma, Bounds, CheckOptions, CheckResult};

fn show(r: &CheckResult) {
    println!("{}: {:?}", r.lemma.name, r.verdict);
    let Some(ev) = &r.evidence else {
        println!("  no trace to show ({} nodes explored)\n", r.stats.nodes);
        return;
    };
    for e in &ev.trace.events {
        println!("  {e}");
    }
    for (k, v) in &ev.assignment {
        println!("  {k} := {v}");
    }
    for (t, proof) in &ev.proofs {
        println!("  intruder derives {t}:");
        for line in proof.to_string().lines() {
            println!("    {line}");
        }
    }
    println!();
}

fn main() {
    let bounds = Bounds {
        epochs: 2,
        reports: 1,
        ..Bounds::default()
    };
    let opts = CheckOptions::new();
    for name in ["d0_sec_no_exception", "pfs_init_sk_ski_leak"] {
        show(&check_lemma(
            &find_lemma(name).expect("control"),
            &bounds,
            &opts,
        ));
    }
    let no_ecdh = CheckOptions {
        theory: Theory::without_ecdh(),
        ..opts
    };
    show(&check_lemma(
        &find_lemma("sanity_check").expect("builtin"),
        &bounds,
        &no_ecdh,
    ));
}
