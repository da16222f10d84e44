//! Parsing, normal forms and the ECDH equation.
//!
//! ```text
//! cargo run --example term_algebra -- "sdec(senc(m, ~k), ~k)"
//! ```

use findmy_verif::term::{equal_mod_e, parse, Term, Theory};

fn main() {
    let inputs: Vec<String> = std::env::args().skip(1).collect();
    let inputs = if inputs.is_empty() {
        vec![
            "sdec(senc(m, ~k), ~k)".to_string(),
            "fst(<a, snd(<b, c>)>)".to_string(),
            "AEAD_dec(~k, AEADenc(~k, <loc, t>, iv))".to_string(),
            "SS_fn(~dF, pk(~d1))".to_string(),
            "sdec(senc(m, ~k), ~wrong)".to_string(),
        ]
    } else {
        inputs
    };

    for src in &inputs {
        match parse(src) {
            Ok(t) => {
                let n = Theory::default().normalize(&t);
                println!(
                    "{src}\n  normal form: {n}\n  height {}, {} nodes",
                    n.height(),
                    n.node_count()
                );
            }
            Err(e) => println!("{src}\n  parse error: {e}"),
        }
    }

    // Both sides of an ECDH exchange compute the same shared secret.
    let (finder, beacon) = (Term::fresh("dF", 1), Term::fresh("d1", 2));
    let at_finder = Term::ss_fn(finder.clone(), Term::pk(beacon.clone()));
    let at_owner = Term::ss_fn(beacon, Term::pk(finder));
    println!("\nfinder computes {at_finder}");
    println!("owner  computes {at_owner}");
    println!(
        "equal modulo the theory: {}",
        equal_mod_e(&at_finder, &at_owner)
    );
    println!(
        "equal without the ECDH equation: {}",
        Theory::without_ecdh().equal(&at_finder, &at_owner)
    );
}
