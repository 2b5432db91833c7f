//! Mean age of information of a tagged update stream that shares a FCFS
//! single-server queue with Poisson background traffic.
//!
//! The tagged stream generates packets with phase-type inter-generation times;
//! background packets arrive as a Poisson stream. The crate computes the
//! exact mean AoI by a uniformization-based matrix-analytic pipeline, the
//! closed-form bounds and bound-optimal rate, and a discrete-event simulation
//! used as an independent check.
//!
//! The analytic code is generic over [`Real`] (`f32` or `f64`); the
//! simulator is `f64` only.

pub mod aoi;
pub mod bounds;
pub mod busy;
pub mod dist;
pub mod error;
pub mod linalg;
pub mod model;
pub mod phtype;
pub mod scalar;
mod series;
pub mod sim;
pub mod workload;

pub use aoi::{b_ell_table, mean_aoi, q_series, qk_series, AoiReport, TruncationPolicy};
pub use bounds::{
    general_bounds_daley, golden_section_log, minimize_mean_aoi, nbue_bounds, optimal_bound_value, optimal_rate, upper_bound_at,
    MomentSet, Optimum, QueueMoments,
};
pub use busy::{busy_coeffs, kendall_fixed_point, renewal_coeffs, ybg_table, BusyCoeffs};
pub use dist::Distribution;
pub use error::{AoiError, Result};
pub use linalg::Mat;
pub use model::ModelSpec;
pub use phtype::PhaseType;
pub use scalar::Real;
pub use sim::{replicate, replication_rng, simulate, simulate_traced, SimConfig, SimEstimate};

pub type Distribution64 = Distribution<f64>;
pub type Distribution32 = Distribution<f32>;
pub type PhaseType64 = PhaseType<f64>;
pub type PhaseType32 = PhaseType<f32>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type AoiReport64 = AoiReport<f64>;
pub type AoiReport32 = AoiReport<f32>;
