//! Simulated couples for the otter service: trace generation, agent
//! behaviour, event logs and an offline verifier.

pub mod agent;
pub mod config;
pub mod couple;
pub mod fuzz;
pub mod log;
pub mod oracle;
pub mod plan;
pub mod verify;
