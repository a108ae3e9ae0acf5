//! Deterministic simulation and exhaustive checking of key post-processing
//! over a practically authenticated classical channel.

pub mod adversary;
pub mod channel;
pub mod core_model;
pub mod harness;
pub mod mac;
pub mod protocols;
pub mod security;
