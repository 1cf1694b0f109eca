//! Exact event-driven simulation and stability analysis of piecewise
//! deterministic metapopulation processes on directed graphs.
//!
//! Each patch of the network carries a nonnegative continuous population that
//! evolves deterministically between transfers (its own growth field), while
//! transfers along edges happen at state-dependent Poisson rates and move a
//! random amount drawn from a law supported on the origin's population.
//!
//! The crate is organised as:
//!
//! * [`model`]: network description, validation, transfer quantiles and debits.
//! * [`flow`]: the deterministic inter-jump flow with drain-time detection.
//! * [`sim`]: the exact thinning simulator, deterministic replay, and the
//!   scaled simplex process.
//! * [`stability`]: structural audits, exit-edge and sink-cycle constructions,
//!   drift conditions and classification.
//! * [`analysis`]: generator checks, stationary identities, occupancy, the
//!   drift walk, and the two-patch beta diagnostic.
//! * [`config`] / [`io`]: the model description file and trajectory files.

// NaN must fail every range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod builtin;
pub mod config;
pub mod error;
pub mod flow;
pub mod io;
pub mod model;
pub mod region;
pub mod rng;
pub mod sim;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
pub use model::{AmplitudeLaw, Edge, GrowthSpec, NetworkModel, PatchClass, RateSpec, RelativeLaw, State};
pub use region::{Atom, Region};
pub use sim::{Event, Trajectory};
