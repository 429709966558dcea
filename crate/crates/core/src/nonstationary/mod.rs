//! Tools for a non-stationary leader: a random-walk mean and the control
//! basis split, Lohe oscillator synchronization, a two-stage Stackelberg
//! game, a finite-difference mean-field game, and the path relaxations
//! feeding its drift term.

pub mod lohe;
pub mod mfg;
pub mod relax;
pub mod stackelberg;
pub mod walk;

pub use lohe::{lohe_integrate, sync_order, LoheSystem};
pub use mfg::{kl_drift_profile, mfg_solve, KlEntry, KlProfile, MfgConfig, MfgSolution};
pub use relax::{fuzzy_cluster_relax, mean_value_reduce, ClusterMode, ClusterRelax, MeanValue};
pub use stackelberg::{stackelberg_schedule, stackelberg_solve, StackelbergInstance, StackelbergSolution};
pub use walk::{decompose_control, random_walk_mean, ControlBasis, Decomposition, Innovation, NonstationaryInput};
