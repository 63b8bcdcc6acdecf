//! Pulse-level simulation and analysis of long-lived photon-echo quantum
//! memories in rare-earth doped crystals.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod echo;
pub mod error;
pub mod levels;
pub mod models;
pub mod photonstats;
pub mod pulses;
mod quad;
pub mod sequences;

pub use error::{Error, Result};
