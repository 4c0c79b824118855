//! Estimation of time-varying forcing in ODE models.
//!
//! The unknown input `θ(t)` is written as a finite sum of sine/cosine pairs with
//! fixed angular frequencies, and the pair coefficients are estimated jointly
//! with the system state by a perturbed-observation ensemble Kalman filter.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command-line
//! driver and parallel replication live in the companion `fenkf` crate.
//!
//! Modules:
//!
//! * [`ode`]: fixed-step RK4 and adaptive Dormand–Prince with dense output.
//! * [`dynamics`]: the forced mass-spring system and its forcing functions.
//! * [`fourier`]: approximation models, presets and a quadrature oracle.
//! * [`enkf`]: ensembles, prediction, analysis and the filter loop.
//! * [`synthdata`]: twin-experiment data generation.
//! * [`experiments`]: experiment presets, RMSE and forward prediction.
#![no_std]
// Negated comparisons such as `!(a < b)` are used on purpose so that NaN
// inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dynamics;
pub mod enkf;
pub mod experiments;
pub mod fourier;
mod linalg;
pub mod ode;
pub mod synthdata;

pub use dynamics::{
    augmented_predict, forcing_eval, mass_spring_rhs, DynamicsError, ForcedMassSpring, ForcingSpec,
    MassSpringParams, StateVector,
};
pub use enkf::{
    analysis_update, ensemble_stats, kalman_gain, observation_operator, predict_ensemble,
    run_filter, run_mass_spring_filter, sample_prior, CoefficientEstimate, Ensemble, EnsembleStats,
    FilterConfig, FilterError, FilterResult, ObservationMask, Propagator, StepRecord,
};
pub use experiments::{
    approximation_from_result, predict_dynamics, preset_experiment, rmse, run_experiment, run_seed,
    ExperimentConfig, ExperimentError, ExperimentPreset, ExperimentReport, Prediction, SeedOutcome,
    SeedReport,
};
pub use fourier::{
    evaluate_fourier, fourier_coefficients_oracle, preset_model, FourierError, FourierModel,
    FourierOracleResult, ModelPreset,
};
pub use ode::{
    integrate_adaptive, integrate_fixed, rk4_step, DenseOutput, IntegrationError,
    IntegratorSettings,
};
pub use synthdata::{
    add_observation_noise, generate_series, generate_truth, DataError, ObservationSeries, TruthSpec,
};

pub use linalg::psd_factor;
