//! Twin experiments on the forced mass-spring system: presets, error metrics
//! and forward prediction with a fitted forcing estimate.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::dynamics::{solve_forced, DynamicsError, ForcingSpec, StateVector};
use crate::enkf::{
    run_mass_spring_filter, CoefficientEstimate, FilterConfig, FilterError, FilterResult,
    ObservationMask,
};
use crate::fourier::{FourierModel, ModelPreset};
use crate::ode::{IntegrationError, IntegratorSettings};
use crate::synthdata::{
    add_observation_noise, generate_truth, DataError, ObservationSeries, TruthSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(
        "unknown experiment `{0}` (expected one of: s31-position, s31-velocity, s31-full, \
         s32-low, s32-high, s32-mixed, s33-linear, s33-cubic)"
    )]
    UnknownPreset(String),
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot compute an error over zero points")]
    Empty,
    #[error("filter result has no assimilation steps")]
    EmptyResult,
    #[error("experiment has no seeds")]
    NoSeeds,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        source: Box<ExperimentError>,
    },
}

/// Root mean square difference of two equally long sequences.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64, ExperimentError> {
    if estimate.len() != truth.len() {
        return Err(ExperimentError::LengthMismatch(estimate.len(), truth.len()));
    }
    if estimate.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let sum: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::sqrt(sum / estimate.len() as f64))
}

/// Median of a non-empty slice (mean of the two central values for even
/// lengths). NaNs sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Forcing estimate from the final posterior coefficient means.
pub fn approximation_from_result(
    result: &FilterResult,
    model: &FourierModel,
) -> Result<ForcingSpec, ExperimentError> {
    if result.steps.is_empty() {
        return Err(ExperimentError::EmptyResult);
    }
    let means = result.final_coefficient_means();
    Ok(ForcingSpec::fourier_estimate(model.clone(), means).map_err(DynamicsError::from)?)
}

/// Integrates the truth system from its initial state with `estimate` in place
/// of the true forcing and samples the result on the observation grid.
pub fn predict_dynamics(
    estimate: &ForcingSpec,
    truth: &TruthSpec,
    settings: &IntegratorSettings,
) -> Result<Vec<StateVector>, ExperimentError> {
    let times = truth.grid_times()?;
    let dense = solve_forced(
        &truth.params,
        estimate,
        truth.x0,
        truth.t_start,
        truth.t_end,
        settings,
    )?;
    times
        .iter()
        .map(|&t| Ok(StateVector::from_slice(&dense.eval(t)?)))
        .collect()
}

/// The bundled experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentPreset {
    S31Position,
    S31Velocity,
    S31Full,
    S32Low,
    S32High,
    S32Mixed,
    S33Linear,
    S33Cubic,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 8] = [
        ExperimentPreset::S31Position,
        ExperimentPreset::S31Velocity,
        ExperimentPreset::S31Full,
        ExperimentPreset::S32Low,
        ExperimentPreset::S32High,
        ExperimentPreset::S32Mixed,
        ExperimentPreset::S33Linear,
        ExperimentPreset::S33Cubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentPreset::S31Position => "s31-position",
            ExperimentPreset::S31Velocity => "s31-velocity",
            ExperimentPreset::S31Full => "s31-full",
            ExperimentPreset::S32Low => "s32-low",
            ExperimentPreset::S32High => "s32-high",
            ExperimentPreset::S32Mixed => "s32-mixed",
            ExperimentPreset::S33Linear => "s33-linear",
            ExperimentPreset::S33Cubic => "s33-cubic",
        }
    }

    pub fn model_preset(self) -> ModelPreset {
        match self {
            ExperimentPreset::S31Position
            | ExperimentPreset::S31Velocity
            | ExperimentPreset::S31Full => ModelPreset::TwoTerm,
            ExperimentPreset::S32Low => ModelPreset::Low,
            ExperimentPreset::S32High => ModelPreset::High,
            ExperimentPreset::S32Mixed => ModelPreset::Mixed,
            ExperimentPreset::S33Linear | ExperimentPreset::S33Cubic => ModelPreset::Lower,
        }
    }

    pub fn mask(self) -> ObservationMask {
        match self {
            ExperimentPreset::S31Position => ObservationMask::position_only(),
            ExperimentPreset::S31Velocity => ObservationMask::velocity_only(),
            _ => ObservationMask::all(2),
        }
    }

    pub fn forcing(self) -> ForcingSpec {
        match self {
            ExperimentPreset::S33Linear => ForcingSpec::Linear {
                slope: -0.07,
                intercept: 2.0,
            },
            ExperimentPreset::S33Cubic => ForcingSpec::CubicShifted {
                a3: 0.0001,
                shift: 25.0,
                a2: -0.001,
                a0: 3.0,
            },
            _ => ForcingSpec::Sine {
                amplitude: 1.0,
                angular_frequency: 1.0,
            },
        }
    }

    /// Whether reports include forward predictions of the states.
    pub fn predicts_states(self) -> bool {
        matches!(
            self,
            ExperimentPreset::S33Linear | ExperimentPreset::S33Cubic
        )
    }

    pub fn config(self) -> ExperimentConfig {
        let mask = self.mask();
        ExperimentConfig {
            name: self.name().to_string(),
            truth: TruthSpec {
                forcing: self.forcing(),
                ..TruthSpec::default()
            },
            model: self.model_preset().model(),
            filter: FilterConfig::mass_spring_default(&mask),
            mask,
            seeds: (1..=10).collect(),
            integrator: IntegratorSettings::default(),
            predict_states: self.predicts_states(),
        }
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentPreset {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ExperimentError::UnknownPreset(s.to_string()))
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub truth: TruthSpec,
    pub model: FourierModel,
    pub mask: ObservationMask,
    pub filter: FilterConfig,
    /// Each seed drives both the data noise and the filter (on separate
    /// streams); `truth.seed` and `filter.seed` are overridden per replicate.
    pub seeds: Vec<u64>,
    /// Fixed substeps drive the ensemble; tolerances drive truth generation
    /// and prediction.
    pub integrator: IntegratorSettings,
    pub predict_states: bool,
}

pub fn preset_experiment(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    Ok(name.parse::<ExperimentPreset>()?.config())
}

/// Forward prediction with the fitted forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub states: Vec<StateVector>,
    pub rmse_position: f64,
    pub rmse_velocity: f64,
}

/// Everything produced by one replicate.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub series: ObservationSeries,
    pub result: FilterResult,
    pub estimate: ForcingSpec,
    pub theta_true: Vec<f64>,
    pub theta_est: Vec<f64>,
    pub rmse_theta: f64,
    pub prediction: Option<Prediction>,
}

impl SeedOutcome {
    pub fn report(&self) -> SeedReport {
        SeedReport {
            seed: self.seed,
            coefficients: self.result.final_coefficients(),
            rmse_theta: self.rmse_theta,
            rmse_position: self.prediction.as_ref().map(|p| p.rmse_position),
            rmse_velocity: self.prediction.as_ref().map(|p| p.rmse_velocity),
        }
    }
}

fn run_seed_inner(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, ExperimentError> {
    let truth_spec = TruthSpec {
        seed,
        ..config.truth.clone()
    };
    let filter = FilterConfig {
        seed,
        start_time: truth_spec.t_start,
        ..config.filter.clone()
    };
    let truth = generate_truth(&truth_spec, &config.integrator)?;
    let series = add_observation_noise(
        &truth.times,
        &truth.states,
        &config.mask,
        truth_spec.noise_std,
        seed,
    )?;
    let result = run_mass_spring_filter(
        &filter,
        &config.model,
        &truth_spec.params,
        &series,
        &config.integrator,
    )?;
    let estimate = approximation_from_result(&result, &config.model)?;
    let theta_true: Vec<f64> = truth
        .times
        .iter()
        .map(|&t| truth_spec.forcing.eval(t))
        .collect();
    let theta_est: Vec<f64> = truth.times.iter().map(|&t| estimate.eval(t)).collect();
    let rmse_theta = rmse(&theta_est, &theta_true)?;

    let prediction = if config.predict_states {
        let states = predict_dynamics(&estimate, &truth_spec, &config.integrator)?;
        let (pp, tp): (Vec<f64>, Vec<f64>) = states
            .iter()
            .zip(&truth.states)
            .map(|(a, b)| (a.p, b.p))
            .unzip();
        let (pv, tv): (Vec<f64>, Vec<f64>) = states
            .iter()
            .zip(&truth.states)
            .map(|(a, b)| (a.v, b.v))
            .unzip();
        Some(Prediction {
            rmse_position: rmse(&pp, &tp)?,
            rmse_velocity: rmse(&pv, &tv)?,
            states,
        })
    } else {
        None
    };

    Ok(SeedOutcome {
        seed,
        series,
        result,
        estimate,
        theta_true,
        theta_est,
        rmse_theta,
        prediction,
    })
}

/// Generates data, runs the filter and evaluates the estimate for one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, ExperimentError> {
    run_seed_inner(config, seed).map_err(|e| ExperimentError::Seed {
        seed,
        source: Box::new(e),
    })
}

/// Final estimates and errors of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub coefficients: Vec<CoefficientEstimate>,
    pub rmse_theta: f64,
    pub rmse_position: Option<f64>,
    pub rmse_velocity: Option<f64>,
}

/// Cross-seed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub coefficient_means: Vec<f64>,
    pub median_rmse_theta: f64,
    pub median_rmse_position: Option<f64>,
    pub median_rmse_velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn from_rows(name: &str, rows: Vec<SeedReport>) -> Result<Self, ExperimentError> {
        if rows.is_empty() {
            return Err(ExperimentError::NoSeeds);
        }
        let k = rows[0].coefficients.len();
        let n = rows.len() as f64;
        let coefficient_means = (0..k)
            .map(|i| rows.iter().map(|r| r.coefficients[i].mean).sum::<f64>() / n)
            .collect();
        let rmse_theta: Vec<f64> = rows.iter().map(|r| r.rmse_theta).collect();
        let pos: Option<Vec<f64>> = rows.iter().map(|r| r.rmse_position).collect();
        let vel: Option<Vec<f64>> = rows.iter().map(|r| r.rmse_velocity).collect();
        let aggregate = Aggregate {
            coefficient_means,
            median_rmse_theta: median(&rmse_theta).unwrap_or(f64::NAN),
            median_rmse_position: pos.and_then(|v| median(&v)),
            median_rmse_velocity: vel.and_then(|v| median(&v)),
        };
        Ok(Self {
            name: name.to_string(),
            rows,
            aggregate,
        })
    }

    pub fn coefficient_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.coefficients.len())
    }
}

/// Runs every seed sequentially and aggregates the results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    if config.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let rows = config
        .seeds
        .iter()
        .map(|&s| run_seed(config, s).map(|o| o.report()))
        .collect::<Result<Vec<_>, _>>()?;
    ExperimentReport::from_rows(&config.name, rows)
}
