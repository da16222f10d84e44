//! The four protocol roles: owner, lost device (LTA), finder and server.
//!
//! Everything here is generic over a [`CryptoProvider`], so the same code
//! drives the symbolic trace engine and the byte-level pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{CryptoError, CryptoProvider};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Agent(pub String);

impl Agent {
    pub fn new(name: impl Into<String>) -> Self {
        Agent(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{role} role for {agent} is not available")]
    RoleUnavailable { role: &'static str, agent: Agent },
    #[error("device is not in lost mode")]
    NotLost,
    #[error("no epoch has been derived yet")]
    NoEpoch,
    #[error("owner channel is not authenticated")]
    Unauthenticated,
    #[error("no epoch key matches the report id")]
    NoMatchingEpoch,
    #[error("report decryption failed: {0}")]
    DecryptionFailed(CryptoError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("report store: {0}")]
    Store(String),
}

/// Consumable role assignments. Each grant can be used by exactly one
/// pairing (owner, LTA) or one report (finder).
#[derive(Clone, Debug, Default)]
pub struct RoleBook {
    owners: BTreeSet<Agent>,
    ltas: BTreeSet<Agent>,
    finders: BTreeSet<Agent>,
}

impl RoleBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grant_owner(&mut self, a: Agent) {
        self.owners.insert(a);
    }

    pub fn grant_lta(&mut self, a: Agent) {
        self.ltas.insert(a);
    }

    pub fn grant_finder(&mut self, a: Agent) {
        self.finders.insert(a);
    }

    pub fn has_owner(&self, a: &Agent) -> bool {
        self.owners.contains(a)
    }

    pub fn has_lta(&self, a: &Agent) -> bool {
        self.ltas.contains(a)
    }

    pub fn take_finder(&mut self, a: &Agent) -> Result<(), ProtocolError> {
        if self.finders.remove(a) {
            Ok(())
        } else {
            Err(ProtocolError::RoleUnavailable {
                role: "finder",
                agent: a.clone(),
            })
        }
    }
}

/// The pairing-time secret shared by an owner and its LTA.
pub struct MasterBeaconKey<P: CryptoProvider> {
    pub owner: Agent,
    pub lta: Agent,
    pub d0: P::Secret,
    pub sk0: P::SymKey,
}

/// Rolling key material for one epoch (index >= 1).
pub struct EpochKeys<P: CryptoProvider> {
    pub index: u32,
    pub sk: P::SymKey,
    pub d: P::Secret,
    pub p: P::Pub,
}

pub struct Beacon<P: CryptoProvider> {
    pub p_i: P::Pub,
    /// Stand-in for advertisement framing; never interpreted.
    pub metadata: Vec<u8>,
}

pub struct LocationReport<P: CryptoProvider> {
    pub ciphertext: P::Cipher,
    pub ephemeral_pub: P::Pub,
    pub report_id: P::Digest,
    /// Set by the server when the report is stored.
    pub upload_time: Option<u64>,
}

pub enum ProtocolEvent<P: CryptoProvider> {
    KeyEst {
        owner: Agent,
        lta: Agent,
        d0: P::Secret,
        sk0: P::SymKey,
    },
    /// `LPFS1` when `epoch == 1`, `LPFS2` otherwise.
    Lpfs {
        epoch: u32,
        lta: Agent,
        owner: Agent,
        d0: P::Secret,
        sk0: P::SymKey,
        d: P::Secret,
        sk: P::SymKey,
    },
    OkS {
        lta: Agent,
        owner: Agent,
        d0: P::Secret,
        sk0: P::SymKey,
    },
    Floc {
        loc: P::Plain,
        d_f: P::Secret,
        p_i: P::Pub,
    },
    ServerRecv {
        server: Agent,
        report_id: P::Digest,
    },
    OwnerQuery {
        owner: Agent,
        report_id: P::Digest,
    },
    OwnerDecrypt {
        owner: Agent,
        lta: Agent,
        loc: P::Plain,
        t_f: P::Plain,
    },
}

pub enum NetMessage<P: CryptoProvider> {
    Beacon(Beacon<P>),
    Report(LocationReport<P>),
}

/// Collects emitted events and everything placed on the (adversary
/// visible) network.
pub struct Journal<P: CryptoProvider> {
    pub events: Vec<ProtocolEvent<P>>,
    pub network: Vec<NetMessage<P>>,
}

impl<P: CryptoProvider> Default for Journal<P> {
    fn default() -> Self {
        Journal {
            events: Vec::new(),
            network: Vec::new(),
        }
    }
}

impl<P: CryptoProvider> Journal<P> {
    pub fn new() -> Self {
        Self::default()
    }
}

macro_rules! impl_clone_debug_eq {
    ($ty:ident { $($field:ident),* }) => {
        impl<P: CryptoProvider> Clone for $ty<P> {
            fn clone(&self) -> Self {
                $ty { $($field: self.$field.clone()),* }
            }
        }
        impl<P: CryptoProvider> fmt::Debug for $ty<P> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.debug_struct(stringify!($ty))$(.field(stringify!($field), &self.$field))*.finish()
            }
        }
        impl<P: CryptoProvider> PartialEq for $ty<P> {
            fn eq(&self, other: &Self) -> bool {
                true $(&& self.$field == other.$field)*
            }
        }
    };
}

impl_clone_debug_eq!(MasterBeaconKey {
    owner,
    lta,
    d0,
    sk0
});
impl_clone_debug_eq!(EpochKeys { index, sk, d, p });
impl_clone_debug_eq!(Beacon { p_i, metadata });
impl_clone_debug_eq!(LocationReport {
    ciphertext,
    ephemeral_pub,
    report_id,
    upload_time
});

/// Generates fresh master key material for `owner` and `lta`.
pub fn establish_master_key<P: CryptoProvider>(
    owner: &Agent,
    lta: &Agent,
    provider: &mut P,
) -> MasterBeaconKey<P> {
    let d0 = provider.fresh_secret("d0");
    let sk0 = provider.fresh_sym_key("SK0");
    MasterBeaconKey {
        owner: owner.clone(),
        lta: lta.clone(),
        d0,
        sk0,
    }
}

/// Pairs an owner with an LTA over the out-of-band channel. Both role grants
/// are consumed; nothing is placed on the network.
pub fn pair_devices<P: CryptoProvider>(
    roles: &mut RoleBook,
    owner: &Agent,
    lta: &Agent,
    provider: &mut P,
    journal: &mut Journal<P>,
) -> Result<MasterBeaconKey<P>, ProtocolError> {
    if !roles.has_owner(owner) {
        return Err(ProtocolError::RoleUnavailable {
            role: "owner",
            agent: owner.clone(),
        });
    }
    if !roles.has_lta(lta) {
        return Err(ProtocolError::RoleUnavailable {
            role: "LTA",
            agent: lta.clone(),
        });
    }
    roles.owners.remove(owner);
    roles.ltas.remove(lta);
    let key = establish_master_key(owner, lta, provider);
    journal.events.push(ProtocolEvent::KeyEst {
        owner: owner.clone(),
        lta: lta.clone(),
        d0: key.d0.clone(),
        sk0: key.sk0.clone(),
    });
    Ok(key)
}

/// Derives epoch `prev.index + 1`, or epoch 1 from the master key when
/// `prev` is `None`.
pub fn rotate_epoch<P: CryptoProvider>(
    master: &MasterBeaconKey<P>,
    prev: Option<&EpochKeys<P>>,
    provider: &P,
) -> Result<EpochKeys<P>, ProtocolError> {
    let (index, sk) = match prev {
        None => (1, provider.sk_next(&master.sk0)),
        Some(e) => (e.index + 1, provider.sk_next(&e.sk)),
    };
    let d = provider.d_next(&master.d0, &sk)?;
    let p = provider.pub_of(&d);
    Ok(EpochKeys { index, sk, d, p })
}

/// Epochs `1..=count`.
pub fn derive_epochs<P: CryptoProvider>(
    master: &MasterBeaconKey<P>,
    count: u32,
    provider: &P,
) -> Result<Vec<EpochKeys<P>>, ProtocolError> {
    let mut out: Vec<EpochKeys<P>> = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let next = rotate_epoch(master, out.last(), provider)?;
        out.push(next);
    }
    Ok(out)
}

/// Broadcasts the beacon for `keys` and records the LPFS action.
pub fn emit_beacon<P: CryptoProvider>(
    master: &MasterBeaconKey<P>,
    keys: &EpochKeys<P>,
    journal: &mut Journal<P>,
) -> Beacon<P> {
    let beacon = Beacon {
        p_i: keys.p.clone(),
        metadata: Vec::new(),
    };
    journal.events.push(ProtocolEvent::Lpfs {
        epoch: keys.index,
        lta: master.lta.clone(),
        owner: master.owner.clone(),
        d0: master.d0.clone(),
        sk0: master.sk0.clone(),
        d: keys.d.clone(),
        sk: keys.sk.clone(),
    });
    if keys.index == 1 {
        journal.events.push(ProtocolEvent::OkS {
            lta: master.lta.clone(),
            owner: master.owner.clone(),
            d0: master.d0.clone(),
            sk0: master.sk0.clone(),
        });
    }
    journal.network.push(NetMessage::Beacon(beacon.clone()));
    beacon
}

/// The LTA side: holds the master key and the current epoch.
pub struct LostDevice<P: CryptoProvider> {
    master: MasterBeaconKey<P>,
    current: Option<EpochKeys<P>>,
    lost: bool,
}

impl<P: CryptoProvider> LostDevice<P> {
    pub fn new(master: MasterBeaconKey<P>) -> Self {
        LostDevice {
            master,
            current: None,
            lost: false,
        }
    }

    pub fn set_lost(&mut self, lost: bool) {
        self.lost = lost;
    }

    pub fn is_lost(&self) -> bool {
        self.lost
    }

    pub fn master(&self) -> &MasterBeaconKey<P> {
        &self.master
    }

    pub fn current(&self) -> Option<&EpochKeys<P>> {
        self.current.as_ref()
    }

    /// Rolls to the next epoch without broadcasting.
    pub fn rotate(&mut self, provider: &P) -> Result<&EpochKeys<P>, ProtocolError> {
        let next = rotate_epoch(&self.master, self.current.as_ref(), provider)?;
        Ok(self.current.insert(next))
    }

    /// Broadcasts the current epoch's beacon.
    pub fn beacon(&self, journal: &mut Journal<P>) -> Result<Beacon<P>, ProtocolError> {
        if !self.lost {
            return Err(ProtocolError::NotLost);
        }
        let keys = self.current.as_ref().ok_or(ProtocolError::NoEpoch)?;
        Ok(emit_beacon(&self.master, keys, journal))
    }
}

/// Seals `(loc, t_f)` for the device behind `beacon`. Any public key is
/// accepted: a finder has no way to authenticate a beacon.
pub fn finder_make_report<P: CryptoProvider>(
    beacon: &Beacon<P>,
    loc: &P::Plain,
    t_f: &P::Plain,
    provider: &mut P,
    journal: &mut Journal<P>,
) -> Result<LocationReport<P>, ProtocolError> {
    let d_f = provider.fresh_secret("d_f");
    let p_i = &beacon.p_i;
    let shared = provider.ecdh(&d_f, p_i)?;
    let key = provider.key_of(&shared, p_i);
    let iv = provider.iv_of(&shared, p_i);
    let sealed_loc = provider.sym_seal(&key, loc);
    let inner = provider.pair(&sealed_loc, t_f);
    let report = LocationReport {
        ciphertext: provider.aead_seal(&key, &inner, &iv),
        ephemeral_pub: provider.pub_of(&d_f),
        report_id: provider.hash(p_i),
        upload_time: None,
    };
    journal.events.push(ProtocolEvent::Floc {
        loc: loc.clone(),
        d_f,
        p_i: p_i.clone(),
    });
    journal.network.push(NetMessage::Report(report.clone()));
    Ok(report)
}

/// Server-side report storage, indexed by report id.
pub trait ReportStore<P: CryptoProvider> {
    /// Stores the report and returns the upload time it was assigned.
    fn put(&mut self, report: LocationReport<P>) -> Result<u64, ProtocolError>;
    fn get(&self, report_id: &P::Digest) -> Result<Vec<LocationReport<P>>, ProtocolError>;
}

pub struct MemoryStore<P: CryptoProvider> {
    reports: BTreeMap<P::Digest, Vec<LocationReport<P>>>,
    clock: u64,
}

impl<P: CryptoProvider> Default for MemoryStore<P> {
    fn default() -> Self {
        MemoryStore {
            reports: BTreeMap::new(),
            clock: 0,
        }
    }
}

impl<P: CryptoProvider> MemoryStore<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.reports.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

impl<P: CryptoProvider> ReportStore<P> for MemoryStore<P> {
    fn put(&mut self, mut report: LocationReport<P>) -> Result<u64, ProtocolError> {
        self.clock += 1;
        report.upload_time = Some(self.clock);
        self.reports
            .entry(report.report_id.clone())
            .or_default()
            .push(report);
        Ok(self.clock)
    }

    fn get(&self, report_id: &P::Digest) -> Result<Vec<LocationReport<P>>, ProtocolError> {
        Ok(self.reports.get(report_id).cloned().unwrap_or_default())
    }
}

pub fn server_store<P: CryptoProvider, S: ReportStore<P>>(
    store: &mut S,
    server: &Agent,
    report: LocationReport<P>,
    journal: &mut Journal<P>,
) -> Result<u64, ProtocolError> {
    let report_id = report.report_id.clone();
    let t = store.put(report)?;
    journal.events.push(ProtocolEvent::ServerRecv {
        server: server.clone(),
        report_id,
    });
    Ok(t)
}

/// Returns every stored report under `report_id` (possibly none). The owner
/// must come in over the authenticated channel.
pub fn server_fetch<P: CryptoProvider, S: ReportStore<P>>(
    store: &S,
    owner: &Agent,
    authenticated: bool,
    report_id: &P::Digest,
    journal: &mut Journal<P>,
) -> Result<Vec<LocationReport<P>>, ProtocolError> {
    if !authenticated {
        return Err(ProtocolError::Unauthenticated);
    }
    journal.events.push(ProtocolEvent::OwnerQuery {
        owner: owner.clone(),
        report_id: report_id.clone(),
    });
    store.get(report_id)
}

/// Finds the epoch whose beacon key hashes to `report_id`.
pub fn owner_match<'a, P: CryptoProvider>(
    epochs: &'a [EpochKeys<P>],
    report_id: &P::Digest,
    provider: &P,
) -> Option<&'a EpochKeys<P>> {
    epochs.iter().find(|e| provider.hash(&e.p) == *report_id)
}

/// Recovers `(loc, t_f)` from a report using the epoch's private key.
pub fn owner_decrypt<P: CryptoProvider>(
    report: &LocationReport<P>,
    keys: &EpochKeys<P>,
    provider: &P,
) -> Result<(P::Plain, P::Plain), ProtocolError> {
    let shared = provider
        .ecdh(&keys.d, &report.ephemeral_pub)
        .map_err(ProtocolError::DecryptionFailed)?;
    let key = provider.key_of(&shared, &keys.p);
    let iv = provider.iv_of(&shared, &keys.p);
    let inner = provider
        .aead_open(&key, &report.ciphertext, &iv)
        .map_err(ProtocolError::DecryptionFailed)?;
    let (sealed_loc, t_f) = provider
        .unpair(&inner)
        .map_err(ProtocolError::DecryptionFailed)?;
    let loc = provider
        .sym_open(&key, &sealed_loc)
        .map_err(ProtocolError::DecryptionFailed)?;
    Ok((loc, t_f))
}

/// The owner side: master key plus the locally derived epoch list.
pub struct Owner<P: CryptoProvider> {
    master: MasterBeaconKey<P>,
    epochs: Vec<EpochKeys<P>>,
}

impl<P: CryptoProvider> Owner<P> {
    pub fn new(master: MasterBeaconKey<P>) -> Self {
        Owner {
            master,
            epochs: Vec::new(),
        }
    }

    pub fn master(&self) -> &MasterBeaconKey<P> {
        &self.master
    }

    pub fn epochs(&self) -> &[EpochKeys<P>] {
        &self.epochs
    }

    /// Extends the local epoch list up to `count` entries.
    pub fn derive_through(&mut self, count: u32, provider: &P) -> Result<(), ProtocolError> {
        while (self.epochs.len() as u32) < count {
            let next = rotate_epoch(&self.master, self.epochs.last(), provider)?;
            self.epochs.push(next);
        }
        Ok(())
    }

    /// Matches the report against the local epochs and decrypts it.
    pub fn locate(
        &self,
        report: &LocationReport<P>,
        provider: &P,
        journal: &mut Journal<P>,
    ) -> Result<(P::Plain, P::Plain), ProtocolError> {
        let keys = owner_match(&self.epochs, &report.report_id, provider)
            .ok_or(ProtocolError::NoMatchingEpoch)?;
        let (loc, t_f) = owner_decrypt(report, keys, provider)?;
        journal.events.push(ProtocolEvent::OwnerDecrypt {
            owner: self.master.owner.clone(),
            lta: self.master.lta.clone(),
            loc: loc.clone(),
            t_f: t_f.clone(),
        });
        Ok((loc, t_f))
    }
}
