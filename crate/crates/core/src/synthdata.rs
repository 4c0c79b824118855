//! Twin-experiment data: integrate a known truth, sample it on a uniform grid
//! and corrupt the samples with Gaussian noise.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dynamics::{solve_forced, ForcingSpec, MassSpringParams, StateVector};
use crate::enkf::ObservationMask;
use crate::ode::{DenseOutput, IntegrationError, IntegratorSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid truth specification: {0}")]
    InvalidSpec(&'static str),
    #[error("observation times must be finite and strictly increasing (index {0})")]
    TimeOrder(usize),
    #[error("{what}: expected {expected} values, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite observation at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Noisy observations of the masked state components at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    times: Vec<f64>,
    // Row-major, one row of `mask.observed_count()` values per time.
    values: Vec<f64>,
    mask: ObservationMask,
    truth: Option<Vec<StateVector>>,
}

impl ObservationSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        mask: ObservationMask,
        truth: Option<Vec<StateVector>>,
    ) -> Result<Self, DataError> {
        let m = mask.observed_count();
        if values.len() != times.len() * m {
            return Err(DataError::Dimension {
                what: "observation values",
                expected: times.len() * m,
                actual: values.len(),
            });
        }
        for (i, t) in times.iter().enumerate() {
            if !t.is_finite() || (i > 0 && !(*t > times[i - 1])) {
                return Err(DataError::TimeOrder(i));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i / m));
        }
        if let Some(truth) = &truth {
            if mask.state_dim() != StateVector::DIM {
                return Err(DataError::Dimension {
                    what: "mask for truth states",
                    expected: StateVector::DIM,
                    actual: mask.state_dim(),
                });
            }
            if truth.len() != times.len() {
                return Err(DataError::Dimension {
                    what: "truth states",
                    expected: times.len(),
                    actual: truth.len(),
                });
            }
        }
        Ok(Self {
            times,
            values,
            mask,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.observed_count()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let m = self.observed_count();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics; a mask always has m >= 1.
        self.values.chunks_exact(self.observed_count())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn truth(&self) -> Option<&[StateVector]> {
        self.truth.as_deref()
    }

    pub fn without_truth(mut self) -> Self {
        self.truth = None;
        self
    }
}

/// Everything needed to produce one synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub params: MassSpringParams,
    pub forcing: ForcingSpec,
    pub x0: StateVector,
    pub t_start: f64,
    pub t_end: f64,
    pub dt_obs: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TruthSpec {
    /// `θ(t) = sin t`, `x(0) = [2; 0]`, `m, b, k = 10, 3, 5`, observations
    /// every 0.5 on `(0, 60]` with noise standard deviation 0.08.
    fn default() -> Self {
        Self {
            params: MassSpringParams::default(),
            forcing: ForcingSpec::Sine {
                amplitude: 1.0,
                angular_frequency: 1.0,
            },
            x0: StateVector::new(2.0, 0.0),
            t_start: 0.0,
            t_end: 60.0,
            dt_obs: 0.5,
            noise_std: 0.08,
            seed: 0,
        }
    }
}

impl TruthSpec {
    /// Validates the settings and returns the number of grid points `T`.
    pub fn grid_len(&self) -> Result<usize, DataError> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(DataError::InvalidSpec("t_end must exceed t_start"));
        }
        if !(self.dt_obs > 0.0 && self.dt_obs.is_finite()) {
            return Err(DataError::InvalidSpec("dt_obs must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::InvalidSpec("noise_std must be non-negative"));
        }
        if !self.x0.is_finite() {
            return Err(DataError::InvalidSpec("initial state must be finite"));
        }
        let ratio = (self.t_end - self.t_start) / self.dt_obs;
        let count = libm::round(ratio);
        if (ratio - count).abs() > 1e-9 || count < 1.0 {
            return Err(DataError::InvalidSpec(
                "the observation spacing must divide the time span",
            ));
        }
        Ok(count as usize)
    }

    /// `t_j = t_start + j·dt_obs` for `j = 1..=T`.
    pub fn grid_times(&self) -> Result<Vec<f64>, DataError> {
        let n = self.grid_len()?;
        Ok((1..=n)
            .map(|j| self.t_start + j as f64 * self.dt_obs)
            .collect())
    }
}

/// Truth trajectory with its samples on the observation grid.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub dense: DenseOutput,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

/// Integrates the truth system adaptively and samples it on the grid.
pub fn generate_truth(
    spec: &TruthSpec,
    settings: &IntegratorSettings,
) -> Result<TruthTrajectory, DataError> {
    let times = spec.grid_times()?;
    let dense = solve_forced(
        &spec.params,
        &spec.forcing,
        spec.x0,
        spec.t_start,
        spec.t_end,
        settings,
    )?;
    let states = times
        .iter()
        .map(|&t| dense.eval(t).map(|x| StateVector::from_slice(&x)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TruthTrajectory {
        dense,
        times,
        states,
    })
}

/// Generator used for observation noise (ChaCha stream 0 of `seed`).
pub fn data_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adds independent `N(0, noise_std²)` noise to the observed components of
/// each grid sample. One draw is taken per state component per time, observed
/// or not, so different masks with the same seed see the same noise.
pub fn add_observation_noise(
    times: &[f64],
    states: &[StateVector],
    mask: &ObservationMask,
    noise_std: f64,
    seed: u64,
) -> Result<ObservationSeries, DataError> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(DataError::InvalidSpec("noise_std must be non-negative"));
    }
    if mask.state_dim() != StateVector::DIM {
        return Err(DataError::Dimension {
            what: "observation mask",
            expected: StateVector::DIM,
            actual: mask.state_dim(),
        });
    }
    if times.len() != states.len() {
        return Err(DataError::Dimension {
            what: "truth states",
            expected: times.len(),
            actual: states.len(),
        });
    }
    let mut rng = data_rng(seed);
    let mut values = Vec::with_capacity(times.len() * mask.observed_count());
    for x in states {
        let x = x.to_array();
        for (i, &observed) in mask.observed().iter().enumerate() {
            let eta: f64 = rng.sample(StandardNormal);
            if observed {
                values.push(x[i] + noise_std * eta);
            }
        }
    }
    ObservationSeries::new(times.to_vec(), values, mask.clone(), Some(states.to_vec()))
}

/// Truth generation followed by noise at the configured level and seed.
pub fn generate_series(
    spec: &TruthSpec,
    mask: &ObservationMask,
    settings: &IntegratorSettings,
) -> Result<ObservationSeries, DataError> {
    let truth = generate_truth(spec, settings)?;
    add_observation_noise(&truth.times, &truth.states, mask, spec.noise_std, spec.seed)
}
