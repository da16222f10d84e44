//! The rolling key schedule on P-224, printed epoch by epoch.
//!
//! ```text
//! cargo run --example key_schedule -- [seed] [epochs]
//! ```

use findmy_verif::concrete::{encode_point, report_id, ConcreteProvider};
use findmy_verif::protocol::{derive_epochs, establish_master_key, Agent};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let mut p = ConcreteProvider::from_seed(seed);
    let master = establish_master_key(&Agent::new("owner"), &Agent::new("lta"), &mut p);
    println!("d0  = {}", hex::encode(master.d0.to_be_bytes()));
    println!("SK0 = {}", hex::encode(master.sk0));

    for k in derive_epochs(&master, epochs, &p).expect("schedule") {
        let p_bytes = encode_point(&k.p);
        println!("\nepoch {}", k.index);
        println!("  SK = {}", hex::encode(k.sk));
        println!("  d  = {}", hex::encode(k.d.to_be_bytes()));
        println!("  p  = {}", hex::encode(p_bytes));
        println!("  id = {}", hex::encode(report_id(&p_bytes)));
    }
}
