//! Mirror-game Gray-Wyner privacy toolkit.
//!
//! Discrete information measures ([`prob`]), the multi-Bob mirror game and
//! its relaxations ([`mirror_game`]), greedy and trust-region solvers
//! ([`solvers`]), a same-color K-cut coalition game ([`equilibrium`]), the
//! non-stationarity suite ([`nonstationary`]), linear-plant rank tests
//! ([`plant`]), latent-variable divergence diagnostics ([`divergence`]) and
//! the batch experiment runner behind the `mirrorwyner` binary ([`harness`]).

pub mod divergence;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod mirror_game;
pub mod nonstationary;
pub mod plant;
pub mod prob;
pub mod solvers;

pub use error::{Error, Result};
