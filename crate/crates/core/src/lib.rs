//! Uplink resource allocation for distributed multi-satellite MIMO.
//!
//! The crate models LEO satellites that jointly receive from ground users:
//! Rician channels with MMSE estimation under pilot contamination, a
//! closed-form achievable-rate bound for MRC combining, and the allocation
//! machinery built on it (conflict-graph scheduling, SCA power and weight
//! control through geometric programming, and concave bandwidth splitting).

pub mod allocation;
pub mod channel;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod linalg;
pub mod montecarlo;
pub mod optimizer;
pub mod rate;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod units;

pub use allocation::{Allocation, Schedule};
pub use error::{Error, Result};
pub use estimation::EstimatorBank;
pub use rate::RateModel;
pub use scenario::{Scenario, SystemConfig};
