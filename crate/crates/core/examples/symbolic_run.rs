//! The protocol run over symbolic terms: the same state machine as the
//! concrete pipeline, with every message a term an intruder could observe.

use findmy_verif::protocol::{
    finder_make_report, pair_devices, server_fetch, server_store, Agent, Journal, LostDevice,
    MemoryStore, Owner, ProtocolEvent, RoleBook,
};
use findmy_verif::provider::SymbolicProvider;
use findmy_verif::term::Term;

fn main() {
    let mut p = SymbolicProvider::default();
    let mut journal = Journal::new();
    let (owner, lta, finder) = (Agent::new("O"), Agent::new("L"), Agent::new("F"));

    let mut roles = RoleBook::new();
    roles.grant_owner(owner.clone());
    roles.grant_lta(lta.clone());
    roles.grant_finder(finder.clone());
    let master = pair_devices(&mut roles, &owner, &lta, &mut p, &mut journal).expect("pairing");

    let mut device = LostDevice::new(master.clone());
    device.set_lost(true);
    for _ in 0..2 {
        device.rotate(&p).expect("rotation");
    }
    let beacon = device.beacon(&mut journal).expect("beacon");
    println!("beacon p_2 = {}", beacon.p_i);

    roles.take_finder(&finder).expect("finder role");
    let report = finder_make_report(
        &beacon,
        &Term::public("loc"),
        &Term::public("tF"),
        &mut p,
        &mut journal,
    )
    .expect("report");
    println!("report id  = {}", report.report_id);
    println!("ciphertext = {}", report.ciphertext);

    let mut store = MemoryStore::new();
    server_store(&mut store, &Agent::new("S"), report.clone(), &mut journal).expect("store");
    let mut o = Owner::new(master);
    o.derive_through(2, &p).expect("owner schedule");
    let fetched =
        server_fetch(&store, &owner, true, &report.report_id, &mut journal).expect("fetch");
    let (loc, t) = o.locate(&fetched[0], &p, &mut journal).expect("decrypt");
    println!("owner recovers ({loc}, {t})");

    println!("\nactions:");
    for e in &journal.events {
        println!("  {}", describe(e));
    }
    println!("\non the network: {} message(s)", journal.network.len());
}

fn describe(e: &ProtocolEvent<SymbolicProvider>) -> String {
    match e {
        ProtocolEvent::KeyEst {
            owner,
            lta,
            d0,
            sk0,
        } => {
            format!("KeyEst({}, {}, {d0}, {sk0})", owner.name(), lta.name())
        }
        ProtocolEvent::Lpfs { epoch, d, sk, .. } => {
            format!("LPFS epoch {epoch}: d = {d}, SK = {sk}")
        }
        ProtocolEvent::OkS { lta, .. } => format!("Ok_s({})", lta.name()),
        ProtocolEvent::Floc { loc, d_f, p_i } => format!("Floc({loc}, {d_f}, {p_i})"),
        ProtocolEvent::ServerRecv { server, report_id } => {
            format!("ServerRecv({}, {report_id})", server.name())
        }
        ProtocolEvent::OwnerQuery { owner, report_id } => {
            format!("OwnerQuery({}, {report_id})", owner.name())
        }
        ProtocolEvent::OwnerDecrypt {
            owner, loc, t_f, ..
        } => {
            format!("OwnerDecrypt({}, {loc}, {t_f})", owner.name())
        }
    }
}
