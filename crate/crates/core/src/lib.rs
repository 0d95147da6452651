//! Packet-success analysis for vehicular safety broadcast under interference
//! and Monte Carlo estimation of rear-end collision probability on a
//! braking chain.

pub mod chain_kinematics;
pub mod error;
pub mod harness;
pub mod mac_analytics;
pub mod propagation;
pub mod safety_sim;
pub mod special;

pub use error::{Error, Result};
