//! Checks the built-in lemma suite and prints one row per lemma.
//!
//! ```text
//! cargo run --release --example verify_lemmas -- epochs=2 reports=1
//! ```
//! Arguments are bound overrides; with none, the default bounds apply.

use findmy_verif::trace::{builtin_lemmas, check_suite, Bounds, CheckOptions};

fn main() {
    let mut bounds = Bounds::default();
    for kv in std::env::args().skip(1) {
        let (k, v) = kv.split_once('=').expect("KEY=VAL");
        if let Err(e) = bounds.set(k, v) {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
    println!(
        "bounds: {} session(s), {} epoch(s), {} report(s), depth {}\n",
        bounds.sessions, bounds.epochs, bounds.reports, bounds.depth
    );
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results = check_suite(&builtin_lemmas(), &bounds, &CheckOptions::new(), jobs);
    println!(
        "{:<14} {:<16} {:>8} {:>9}",
        "lemma", "verdict", "nodes", "ms"
    );
    for r in &results {
        println!(
            "{:<14} {:<16} {:>8} {:>9}",
            r.lemma.name,
            format!("{:?}", r.verdict),
            r.stats.nodes,
            r.elapsed.as_millis()
        );
        if let Some(a) = r.annotation() {
            println!("{:<14} ({a})", "");
        }
    }
    let bad = results.iter().filter(|r| !r.matches_expectation()).count();
    println!("\n{} lemma(s), {bad} unexpected verdict(s)", results.len());
    if bad > 0 {
        std::process::exit(1);
    }
}
