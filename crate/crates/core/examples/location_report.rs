//! One lost-device round trip with real cryptography: pairing, rotation,
//! beacon, encrypted finder report, server storage and owner decryption.
//!
//! ```text
//! cargo run --example location_report -- [seed] [epochs]
//! ```
//! Reports are appended to a JSONL store in a temporary directory.

use findmy_verif::demo::run_demo;
use findmy_verif::store::FileStore;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let epochs: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let dir = tempfile_dir();
    let path = dir.join("reports.jsonl");
    let mut store = FileStore::open(&path).expect("open store");
    match run_demo(seed, epochs, &mut store) {
        Ok(tx) => {
            print!("{tx}");
            println!("\nstore {} holds {} report(s)", path.display(), store.len());
        }
        Err(e) => {
            eprintln!("pipeline failed: {e}");
            std::process::exit(1);
        }
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("findmy-example-{}", std::process::id()));
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
