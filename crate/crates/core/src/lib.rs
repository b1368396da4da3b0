//! Discrete-event simulation of V2V safety messaging under pseudonym-based
//! security, with a CLI harness for parameter sweeps.

pub mod app;
pub mod config;
pub mod harness;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod security;
pub mod sim;
pub mod time;
