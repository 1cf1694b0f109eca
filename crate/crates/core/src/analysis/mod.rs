//! Statistical checks of the process: generator consistency, stationary
//! identities and occupancy, the drift walk and its exponential martingale,
//! and transient-regime diagnostics.

pub mod beta;
pub mod drift;
pub mod generator;
pub mod stationary;
pub mod transient;

pub use beta::{beta_diagnostic, BetaReport};
pub use drift::{drift_walk, gamma_rate, hitting_check, martingale_check, DriftWalkParams, GammaRate, MartingaleReport};
pub use generator::{dynkin_check, generator_apply, DynkinResult, TestFunction};
pub use stationary::{
    endpoint_fraction, f_moment, indicator_total_correlation, occupancy, occupancy_estimate,
    relaxation_stationary_means, stationary_residuals, StationaryReport,
};
pub use transient::{growth_slope, scaled_deviation_trend};
