//! Every trace of a small scenario as JSONL on stdout, one record per step.
//!
//! ```text
//! cargo run --example dump_traces | head
//! ```

use std::collections::BTreeSet;
use std::io::Write;

use findmy_verif::adversary::RevealKind;
use findmy_verif::trace::report::dump_traces;
use findmy_verif::trace::{Bounds, Scenario};

fn main() {
    let bounds = Bounds {
        epochs: 2,
        reports: 0,
        injection: 0,
        ..Bounds::default()
    };
    let reveals = BTreeSet::from([RevealKind::D0]);
    let sc = Scenario::new(bounds, reveals);
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let stats = dump_traces(&sc, &mut out).expect("write");
    out.flush().expect("flush");
    eprintln!("{} trace(s), {} record(s)", stats.traces, stats.records);
}
