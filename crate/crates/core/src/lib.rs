//! tourmart: a parametric audit instrument for commission steering in
//! marketplace recommender agents.
//!
//! The pipeline: a seeded market generator produces small travel markets;
//! a message producer writes per-traveler recommendations under a
//! commission objective; a perception reader extracts a 4-channel
//! perception vector from each message; a frozen deterministic welfare
//! rule maps perception plus economic state to accept/reject under two
//! governance dials (lambda, kappa). Paired original-vs-factual replay
//! yields a steering delta with exact McNemar and scenario-clustered
//! max-stat permutation inference, a 36-cell governance grid sweep, and
//! a six-gate audit of the producer's text.

pub mod config;
pub mod error;
pub mod fixed;
pub mod gates;
pub mod harness;
pub mod io;
pub mod market;
pub mod pairing;
pub mod providers;
pub mod report;
pub mod rule;
pub mod stats;
pub mod sweep;

pub use config::AuditConfig;
pub use error::{Error, Result};
pub use market::{Allocation, Bundle, Market, Regime, Traveler};
pub use pairing::{EpisodeRecord, PairedStimulus, PairingMode, Variant, WindowSpec};
pub use rule::{EconomicState, GovernancePoint, PerceptionVector, RuleCoefficients};
