#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

//! Event-driven sampling and source coding of a Wiener process.
//!
//! The sampler watches the increment of the process since the last sample
//! and fires on one of four events: a rising threshold `a√L + μt`, the
//! constant levels `+a√L` and `-b√L`, or a falling threshold `-(b√L + μt)`,
//! where `L` is the length of the previous codeword. Each event is sent as
//! a prefix codeword whose length is also its transmission time, and the
//! monitor reconstructs the increment exactly from the event and the timing.
//!
//! The crate is organised bottom-up:
//!
//! * [`gauss_stats`]: event probabilities, partial moments and the
//!   constants of the large-slope MSE formula.
//! * [`hitting_times`]: drifted Brownian hitting times and a grid sampler.
//! * [`mse_model`]: exact and large-slope MSE / sampling-rate analytics.
//! * [`code_optimizer`]: optimal code lengths and thresholds under Kraft and
//!   sampling-rate constraints.
//! * [`simulator`]: discrete-time Monte Carlo of the full protocol.
//! * [`quadrature`]: adaptive Gauss-Kronrod integration, used only to
//!   cross-check the closed forms.

pub mod code_optimizer;
pub mod error;
pub mod gauss_stats;
pub mod hitting_times;
pub mod mse_model;
pub mod quadrature;
pub mod simulator;

pub use code_optimizer::{
    build_qp, dinkelbach_solve, integer_oracle, optimize_threshold, solve_qp,
    verify_ktilde_negative, AGrid, DinkelbachSolution, IntegerSolution, KtildeReport,
    OptimizationResult, QpInstance, QpSolution, RateConstraint,
};
pub use error::{Error, Result};
pub use gauss_stats::{
    event_probabilities, partial_moments, scheme_constants, EventProbabilities, PartialMoments,
    SchemeConstants, ThresholdConfig,
};
pub use hitting_times::{
    band_exit_lower_prob, band_exit_upper_prob, hit_moments, laplace_transform, sample_hit_time,
    DriftHitSpec, HitMoments, HitSample,
};
pub use mse_model::{
    mse_exact, mse_large_mu, sampling_rate, scale_to_sigma, CodeMode, Codebook, MseBreakdown,
    RateMode,
};
pub use simulator::{
    length_independence_test, run, run_benchmark, CycleRecord, IndependenceTest, Scheme, SimConfig,
    SimulationReport,
};
