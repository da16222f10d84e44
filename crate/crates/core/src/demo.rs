//! The concrete pipeline end to end: pairing, rotation, beaconing, finder
//! report, server storage, owner retrieval and decryption.

use std::fmt;

use thiserror::Error;

use crate::concrete::{encode_point, encode_timestamp, ConcreteProvider};
use crate::protocol::{
    finder_make_report, owner_decrypt, pair_devices, server_fetch, server_store, Agent, Journal,
    LostDevice, Owner, ProtocolError, ReportStore, RoleBook,
};

/// A failed pipeline stage.
#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct DemoError {
    pub stage: &'static str,
    #[source]
    pub source: ProtocolError,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub lines: Vec<(String, String)>,
}

impl Transcript {
    fn push(&mut self, label: impl Into<String>, value: impl Into<String>) {
        self.lines.push((label.into(), value.into()));
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, v) in &self.lines {
            writeln!(f, "{l}: {v}")?;
        }
        Ok(())
    }
}

/// Runs the pipeline for `epochs` rotations. The transcript depends only on
/// `seed` and `epochs`, not on what `store` already holds.
///
/// The location is 8 random bytes drawn from the seeded stream. The run
/// fails unless the owner recovers it byte for byte, and unless the
/// report is rejected under the keys of every other epoch.
pub fn run_demo<S: ReportStore<ConcreteProvider>>(
    seed: u64,
    epochs: u32,
    store: &mut S,
) -> Result<Transcript, DemoError> {
    let at = |stage| move |source| DemoError { stage, source };
    if epochs == 0 {
        return Err(at("rotate")(ProtocolError::NoEpoch));
    }
    let mut p = ConcreteProvider::from_seed(seed);
    let mut journal = Journal::new();
    let mut tx = Transcript::default();
    let (owner, lta, finder, server) = (
        Agent::new("owner"),
        Agent::new("lta"),
        Agent::new("finder"),
        Agent::new("server"),
    );

    let mut roles = RoleBook::new();
    roles.grant_owner(owner.clone());
    roles.grant_lta(lta.clone());
    roles.grant_finder(finder.clone());
    let master =
        pair_devices(&mut roles, &owner, &lta, &mut p, &mut journal).map_err(at("pair"))?;
    tx.push("seed", seed.to_string());
    tx.push("d0", hex::encode(master.d0.to_be_bytes()));
    tx.push("SK0", hex::encode(master.sk0));

    let mut device = LostDevice::new(master.clone());
    device.set_lost(true);
    for _ in 0..epochs {
        let k = device.rotate(&p).map_err(at("rotate"))?;
        tx.push(
            format!("epoch {} d", k.index),
            hex::encode(k.d.to_be_bytes()),
        );
        tx.push(format!("epoch {} SK", k.index), hex::encode(k.sk));
        tx.push(
            format!("epoch {} p", k.index),
            hex::encode(encode_point(&k.p)),
        );
    }
    let beacon = device.beacon(&mut journal).map_err(at("beacon"))?;

    roles.take_finder(&finder).map_err(at("finder"))?;
    let loc = p.random_bytes(8);
    let t_f = encode_timestamp(u64::from(u32::from_be_bytes(
        p.random_bytes(4).try_into().expect("4 bytes"),
    )));
    let report =
        finder_make_report(&beacon, &loc, &t_f, &mut p, &mut journal).map_err(at("finder"))?;
    tx.push("loc", hex::encode(&loc));
    tx.push("t_F", hex::encode(&t_f));
    tx.push(
        "ephemeral_pub",
        hex::encode(encode_point(&report.ephemeral_pub)),
    );
    tx.push("ciphertext", hex::encode(&report.ciphertext));
    tx.push("report_id", hex::encode(report.report_id));

    let report_id = report.report_id;
    server_store(store, &server, report, &mut journal).map_err(at("store"))?;

    let mut o = Owner::new(master);
    o.derive_through(epochs, &p).map_err(at("owner derive"))?;
    let fetched =
        server_fetch(store, &owner, true, &report_id, &mut journal).map_err(at("fetch"))?;
    let stored = fetched
        .last()
        .ok_or(ProtocolError::NoMatchingEpoch)
        .map_err(at("fetch"))?;
    let (got_loc, got_t) = o.locate(stored, &p, &mut journal).map_err(at("decrypt"))?;
    if got_loc != loc || got_t != t_f {
        return Err(at("compare")(ProtocolError::DecryptionFailed(
            crate::provider::CryptoError::Malformed("recovered plaintext differs"),
        )));
    }
    tx.push("recovered loc", hex::encode(&got_loc));
    tx.push("recovered t_F", hex::encode(&got_t));

    for other in o.epochs().iter().filter(|e| e.index != epochs) {
        let label = format!("decrypt with epoch {} keys", other.index);
        match owner_decrypt(stored, other, &p) {
            Err(ProtocolError::DecryptionFailed(_)) => tx.push(label, "rejected"),
            Ok(_) => {
                return Err(at("cross-epoch check")(ProtocolError::DecryptionFailed(
                    crate::provider::CryptoError::Malformed(
                        "report opened under another epoch's keys",
                    ),
                )))
            }
            Err(e) => return Err(at("cross-epoch check")(e)),
        }
    }
    tx.push("result", "ok");
    Ok(tx)
}
