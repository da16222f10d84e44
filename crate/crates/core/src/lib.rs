//! Symbolic and concrete models of the offline-finding protocol, with a
//! bounded trace checker for its security lemmas.

pub mod adversary;
pub mod cli;
pub mod concrete;
pub mod demo;
pub mod event;
pub mod protocol;
pub mod provider;
pub mod store;
pub mod term;
pub mod trace;
