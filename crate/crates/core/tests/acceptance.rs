//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! Runs without the test harness so the lines show up in plain
//! `cargo test` output. Exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use findmy_verif::cli;
use findmy_verif::concrete::{
    aead_seal, d_next_scalar, encode_point, key_iv_split, public_key, sk_next_bytes, x963_kdf,
    ConcreteProvider, SecretScalar,
};
use findmy_verif::demo::run_demo;
use findmy_verif::event::EventKind;
use findmy_verif::protocol::{establish_master_key, Agent, LostDevice, MemoryStore, Owner};
use findmy_verif::term::Theory;
use findmy_verif::trace::{
    builtin_lemmas, check_lemma, check_suite, explore, find_lemma, scenario_for, Bounds,
    CheckOptions, CheckResult, Verdict, Visibility,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

const VERIFIED: [&str; 10] = [
    "sanity_check",
    "epochs_start1",
    "epochs_start2",
    "epochs_end",
    "d0_sec",
    "SK0_sec",
    "di_sec",
    "pfs_init_d",
    "pfs_d",
    "pfs_init_sk",
];

fn verified_suite(results: &[CheckResult], elapsed: Duration) -> Outcome {
    let mut bad = Vec::new();
    for name in VERIFIED {
        let r = results
            .iter()
            .find(|r| r.lemma.name == name)
            .ok_or(format!("{name} missing from the suite"))?;
        let want = if name == "sanity_check" {
            Verdict::WitnessFound
        } else {
            Verdict::HoldsAtBound
        };
        if r.verdict != want {
            bad.push(format!("{name}: {:?}", r.verdict));
        }
    }
    if !bad.is_empty() {
        return Err(bad.join(", "));
    }
    if elapsed >= Duration::from_secs(600) {
        return Err(format!("suite took {elapsed:?}"));
    }
    let nodes: u64 = results.iter().map(|r| r.stats.nodes).sum();
    Ok(format!(
        "10/10 at default bounds, {nodes} nodes, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn bounded_only(results: &[CheckResult]) -> Outcome {
    let mut notes = Vec::new();
    for name in ["ski_sec", "pfs_sk"] {
        let r = results
            .iter()
            .find(|r| r.lemma.name == name)
            .ok_or(format!("{name} missing"))?;
        if r.verdict != Verdict::HoldsAtBound {
            return Err(format!("{name}: {:?}", r.verdict));
        }
        if r.annotation().is_none() {
            return Err(format!("{name} carries no bounded-only annotation"));
        }
        notes.push(format!("{name} holds-at-bound ({} nodes)", r.stats.nodes));
    }
    Ok(notes.join(", ") + ", both labelled bound-only")
}

fn controls(bounds: &Bounds) -> Outcome {
    let weak = find_lemma("d0_sec_no_exception").expect("control lemma");
    let r = check_lemma(&weak, bounds, &CheckOptions::new());
    let ev = r
        .evidence
        .as_ref()
        .ok_or("weakened d0_sec found no counterexample")?;
    if !ev
        .trace
        .events
        .iter()
        .any(|e| e.kind == EventKind::LtkRevealD0)
    {
        return Err("counterexample lacks LtkReveal_d0".into());
    }
    let steps = ev.trace.steps.len();

    let no_ecdh = CheckOptions {
        theory: Theory::without_ecdh(),
        ..CheckOptions::new()
    };
    let sanity = find_lemma("sanity_check").expect("builtin");
    let s = check_lemma(&sanity, bounds, &no_ecdh);
    if s.verdict != Verdict::NoWitness {
        return Err(format!("sanity_check without ECDH: {:?}", s.verdict));
    }
    let sc = scenario_for(&sanity, bounds, &no_ecdh);
    let vis = Visibility {
        kinds: BTreeSet::from([EventKind::OwnerDecrypt]),
        outs: false,
        every_step: false,
    };
    let mut reached = false;
    let stats = explore(&sc, &vis, |st, _| {
        reached |= st.events.iter().any(|e| e.kind == EventKind::OwnerDecrypt);
        if reached {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    if reached {
        return Err("OwnerDecrypt reachable without ECDH".into());
    }
    Ok(format!(
        "(a) counterexample in {steps} steps with LtkReveal_d0; (b) no OwnerDecrypt in {} nodes without ECDH",
        stats.nodes
    ))
}

fn deduction_oracle() -> Outcome {
    let th = Theory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut agree, mut derivable) = (0, 0);
    for i in 0..500 {
        let (kb, target, depth) = common::random_instance(&mut rng);
        let k = common::knowledge(th, &kb);
        let got = k.can_derive(&target, depth).derivable();
        if got != common::closure_derivable(th, k.terms(), &target, depth) {
            return Err(format!(
                "instance {i} disagrees: target {target} depth {depth}"
            ));
        }
        agree += 1;
        derivable += usize::from(got);
    }
    Ok(format!(
        "{agree}/500 agree ({derivable} derivable, {} not)",
        500 - derivable
    ))
}

fn small(k: u8) -> SecretScalar {
    let mut b = [0u8; 28];
    b[27] = k;
    SecretScalar::from_be_bytes(&b).expect("in range")
}

fn vectors() -> Result<usize, String> {
    let seq: Vec<u8> = (0..32).collect();
    let gcm_key: [u8; 16] = core::array::from_fn(|i| i as u8);
    let gcm_iv: [u8; 16] = core::array::from_fn(|i| 16 + i as u8);
    let d0 = SecretScalar::from_hex("0123456789abcdef0123456789abcdef0123456789abcdef01234567")
        .map_err(|e| e.to_string())?;
    let p7 = encode_point(&public_key(&small(7)).map_err(|e| e.to_string())?);
    let (k, iv) = key_iv_split(&[0xaa; 28], &p7).map_err(|e| e.to_string())?;
    let sk1 = sk_next_bytes(&[0u8; 32]).map_err(|e| e.to_string())?;
    let checks: [(&str, String, &str); 7] = [
        (
            "x963 kdf",
            hex::encode(x963_kdf(&seq, b"diversify", 72).map_err(|e| e.to_string())?),
            "aad5357fc950fef34535dea5c7cef403dc68f62925de2e5188d03f459d8f81ad19a6046a022f14e4fae772e624c68bb408e7da2dc4459f784c9d9037b585afded25f034c0399dd40",
        ),
        (
            "sk update",
            hex::encode(sk1),
            "b7d9af2a0a6596e7736b84bd20fa6c1fe15dcc4df82bdc6cddd8616f46d3c518",
        ),
        (
            "d_next(1)",
            hex::encode(d_next_scalar(&small(1), &[0x11; 32]).map_err(|e| e.to_string())?.to_be_bytes()),
            "3e8364166d9b29741d0b857676e3482beeff1ee34b5cce59cced9802",
        ),
        (
            "d_next(d0)",
            hex::encode(d_next_scalar(&d0, &sk1).map_err(|e| e.to_string())?.to_be_bytes()),
            "e259d5d3365f28c72c9da4ea4f550e6ddbfe16fbed1fabe4da127c81",
        ),
        ("report key", hex::encode(k), "22d40b2a03811472f7f2fbbaa8ab27af"),
        ("report iv", hex::encode(iv), "107e59f4343ba136d1e113cca2bfd1e0"),
        (
            "aes-gcm",
            hex::encode(aead_seal(&gcm_key, b"find my location", &gcm_iv)),
            "a2476dcb2f22cfcf7bb23e94b34e845046bb78c2a1c7e4879791d6d5797f5f3b",
        ),
    ];
    for (what, got, want) in &checks {
        if got != want {
            return Err(format!("{what}: got {got}, want {want}"));
        }
    }
    Ok(checks.len())
}

fn concrete_pipeline() -> Outcome {
    let mut runs = 0;
    for seed in 1..=20u64 {
        for epochs in 1..=5 {
            let tx = run_demo(seed, epochs, &mut MemoryStore::new())
                .map_err(|e| format!("seed {seed}, {epochs} epoch(s): {e}"))?;
            if tx.get("recovered loc") != tx.get("loc") || tx.get("recovered t_F") != tx.get("t_F")
            {
                return Err(format!("seed {seed}, {epochs} epoch(s): plaintext differs"));
            }
            runs += 1;
        }
    }
    for seed in 1..=20u64 {
        let mut p = ConcreteProvider::from_seed(1000 + seed);
        let master = establish_master_key(&Agent::new("O"), &Agent::new("L"), &mut p);
        let mut owner = Owner::new(master.clone());
        owner
            .derive_through(64, &p)
            .map_err(|e| format!("owner schedule: {e}"))?;
        let mut lta = LostDevice::new(master);
        lta.set_lost(true);
        for want in owner.epochs() {
            let got = lta.rotate(&p).map_err(|e| format!("LTA schedule: {e}"))?;
            if got.index != want.index
                || got.sk != want.sk
                || got.d.to_be_bytes() != want.d.to_be_bytes()
                || encode_point(&got.p) != encode_point(&want.p)
            {
                return Err(format!(
                    "seed {seed}: schedules split at epoch {}",
                    want.index
                ));
            }
        }
    }
    let n = vectors()?;
    Ok(format!(
        "{runs} round trips, 20 schedules identical through epoch 64, {n} frozen vectors match"
    ))
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(
        std::iter::once("findmy-verif").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, out)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (i, jobs) in ["1", "3"].into_iter().enumerate() {
        let path = dir.path().join(format!("report{i}.json"));
        let p = path.to_str().unwrap().to_string();
        let (code, _) = run_cli(&[
            "verify", "--bounds", "epochs=2", "--jobs", jobs, "--out", &p,
        ]);
        if code != cli::EXIT_OK {
            return Err(format!("verify exited {code}"));
        }
        reports.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if reports[0] != reports[1] {
        return Err("verdict reports differ".into());
    }
    let dump = [
        "dump-traces",
        "--bounds",
        "epochs=2",
        "--bounds",
        "reports=0",
        "--bounds",
        "reveals=LtkReveal_d0",
    ];
    let (c1, a) = run_cli(&dump);
    let (c2, b) = run_cli(&dump);
    if c1 != 0 || c2 != 0 {
        return Err("dump-traces failed".into());
    }
    if a != b {
        return Err("trace dumps differ".into());
    }
    Ok(format!(
        "report {} bytes x2 identical, dump {} lines x2 identical",
        reports[0].len(),
        a.iter().filter(|&&c| c == b'\n').count()
    ))
}

fn main() -> ExitCode {
    let bounds = Bounds::default();
    let start = Instant::now();
    let results = check_suite(&builtin_lemmas(), &bounds, &CheckOptions::new(), jobs());
    let suite_time = start.elapsed();

    let criteria: Vec<(&str, Outcome)> = vec![
        (
            "verified lemmas hold at default bounds",
            verified_suite(&results, suite_time),
        ),
        (
            "ski_sec and pfs_sk bounded verdicts",
            bounded_only(&results),
        ),
        ("attack-finding controls", controls(&bounds)),
        ("deduction oracle equivalence", deduction_oracle()),
        ("concrete pipeline", concrete_pipeline()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in criteria.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
