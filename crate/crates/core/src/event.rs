//! Action labels recorded on a trace.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::term::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    KeyEst,
    Lpfs1,
    Lpfs2,
    LtkRevealD0,
    LtkRevealSk0,
    RevealDi,
    RevealSki,
    Floc,
    OkS,
    ServerRecv,
    OwnerQuery,
    OwnerDecrypt,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::KeyEst,
        EventKind::Lpfs1,
        EventKind::Lpfs2,
        EventKind::LtkRevealD0,
        EventKind::LtkRevealSk0,
        EventKind::RevealDi,
        EventKind::RevealSki,
        EventKind::Floc,
        EventKind::OkS,
        EventKind::ServerRecv,
        EventKind::OwnerQuery,
        EventKind::OwnerDecrypt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::KeyEst => "KeyEst",
            EventKind::Lpfs1 => "LPFS1",
            EventKind::Lpfs2 => "LPFS2",
            EventKind::LtkRevealD0 => "LtkReveal_d0",
            EventKind::LtkRevealSk0 => "LtkReveal_SK0",
            EventKind::RevealDi => "Reveal_di",
            EventKind::RevealSki => "Reveal_ski",
            EventKind::Floc => "Floc",
            EventKind::OkS => "Ok_s",
            EventKind::ServerRecv => "ServerRecv",
            EventKind::OwnerQuery => "OwnerQuery",
            EventKind::OwnerDecrypt => "OwnerDecrypt",
        }
    }

    pub fn from_name(name: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            EventKind::KeyEst | EventKind::OkS | EventKind::OwnerDecrypt => 4,
            EventKind::Lpfs1 | EventKind::Lpfs2 => 6,
            EventKind::LtkRevealD0
            | EventKind::LtkRevealSk0
            | EventKind::RevealDi
            | EventKind::RevealSki
            | EventKind::Floc => 3,
            EventKind::ServerRecv | EventKind::OwnerQuery => 2,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One action at a trace position. Positions start at 1; several actions of
/// different kinds may share a position when a single rule emits them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub params: Vec<Term>,
    pub time: u32,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ") @ #{}", self.time)
    }
}
