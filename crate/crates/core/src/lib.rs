//! Euclidean-distance-matrix fault detection for GNSS pseudoranges.
//!
//! The receiver's pseudoranges are appended to the satellite
//! squared-distance matrix, the result is double-centered into a Gram
//! matrix `G_c`, and the statistic `q = (lambda4 + lambda5) / (2 lambda1)`
//! measures how far the measurements are from a consistent 3-D embedding.
//!
//! [`perturbation`] predicts the fault-free distribution of `q` from
//! first-order eigenvalue sensitivities; [`montecarlo`] checks that
//! prediction by simulation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edm;
pub mod geometry;
pub mod highprec;
pub mod montecarlo;
pub mod perturbation;
pub mod stats;

pub use edm::{EigenOrdering, GramSpectrum};
pub use geometry::{NoiseModel, PseudorangeSample, ScenarioGeometry};
pub use montecarlo::{SimulationSummary, TrialConfig, TrialRecord};
pub use perturbation::{PredictionConfig, StatisticDistribution, Thresholds};
