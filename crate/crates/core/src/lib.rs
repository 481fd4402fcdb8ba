//! Slotted multi-cell uplink simulator with jammers, and a deep Q-learning
//! channel-access agent for the intelligent UE.

pub mod baselines;
pub mod channel;
pub mod dqn;
pub mod env;
pub mod error;
pub mod harness;
pub mod mac;
pub mod neuralnet;
pub mod topology;

pub use error::{Error, Result};
