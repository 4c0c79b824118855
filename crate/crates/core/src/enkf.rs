//! Perturbed-observation ensemble Kalman filter for joint estimation of
//! system states and constant model coefficients.
//!
//! Each ensemble member is an augmented vector `z = [x; c]` holding the `d`
//! system states followed by the coefficients. Coefficients have no dynamics:
//! the prediction step only moves the state block, and the coefficients are
//! corrected in the analysis step through their ensemble cross-covariance with
//! the observed states.
//!
//! Random draws follow a fixed order so a seed fully determines a run:
//!
//! * prior: member by member, `d` normals for the state then one uniform per
//!   coefficient;
//! * each assimilation step: all model-noise draws (member-major,
//!   component-minor), then all observation perturbations in the same order.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{ForcedMassSpring, MassSpringParams};
use crate::fourier::FourierModel;
use crate::linalg::{correlated_normal, is_finite_matrix, is_finite_vector, psd_factor};
use crate::ode::{IntegrationError, IntegratorSettings};
use crate::synthdata::ObservationSeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("{what}: expected dimension {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{0} is not a symmetric positive semi-definite matrix")]
    NotPositiveSemiDefinite(&'static str),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("integration of ensemble member {member} failed: {source}")]
    Integration {
        member: usize,
        source: IntegrationError,
    },
    #[error("ensemble became non-finite")]
    NonFinite,
    #[error("observation times must be strictly increasing and after the start time (index {0})")]
    TimeOrder(usize),
    #[error("assimilation step {index} failed: {source}")]
    Step {
        index: usize,
        source: Box<FilterError>,
    },
}

/// Advances the state block of ensemble members between observation times.
///
/// `interval` is called once per assimilation step and its result is shared by
/// all members, so time-only quantities can be computed once.
pub trait Propagator {
    type Interval;

    fn state_dim(&self) -> usize;

    fn coefficient_count(&self) -> usize;

    fn interval(&self, t0: f64, t1: f64) -> Self::Interval;

    fn propagate(
        &self,
        interval: &Self::Interval,
        state: &mut [f64],
        coefficients: &[f64],
    ) -> Result<(), IntegrationError>;
}

/// `N` augmented members stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    state_dim: usize,
    members: DMatrix<f64>,
}

impl Ensemble {
    /// `members` is `(state_dim + coefficients) × N`, one member per column.
    pub fn new(state_dim: usize, members: DMatrix<f64>) -> Result<Self, FilterError> {
        if members.ncols() < 2 {
            return Err(FilterError::InvalidConfig(
                "an ensemble needs at least two members",
            ));
        }
        if state_dim == 0 || state_dim > members.nrows() {
            return Err(FilterError::Dimension {
                what: "ensemble state block",
                expected: members.nrows(),
                actual: state_dim,
            });
        }
        if !is_finite_matrix(&members) {
            return Err(FilterError::NonFinite);
        }
        Ok(Self { state_dim, members })
    }

    pub fn from_members(state_dim: usize, members: &[Vec<f64>]) -> Result<Self, FilterError> {
        let dim = members.first().map_or(0, |m| m.len());
        if let Some(bad) = members.iter().find(|m| m.len() != dim) {
            return Err(FilterError::Dimension {
                what: "ensemble member",
                expected: dim,
                actual: bad.len(),
            });
        }
        let flat: Vec<f64> = members.iter().flatten().copied().collect();
        Self::new(state_dim, DMatrix::from_vec(dim, members.len(), flat))
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn coefficient_count(&self) -> usize {
        self.dim() - self.state_dim
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn member(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.members.as_slice()[n * d..(n + 1) * d]
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.member(n)[..self.state_dim]
    }

    pub fn coefficients(&self, n: usize) -> &[f64] {
        &self.member(n)[self.state_dim..]
    }

    pub fn stats(&self) -> EnsembleStats {
        ensemble_stats(self)
    }
}

/// Sample mean and `N − 1` sample covariance of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl EnsembleStats {
    pub fn std_dev(&self, i: usize) -> f64 {
        libm::sqrt(self.covariance[(i, i)].max(0.0))
    }
}

pub fn ensemble_stats(ens: &Ensemble) -> EnsembleStats {
    let n = ens.size();
    let mean = ens.members.column_sum() / n as f64;
    let mut centered = ens.members.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut covariance = &centered * centered.transpose() / (n as f64 - 1.0);
    // Exact symmetry regardless of summation order.
    for i in 0..covariance.nrows() {
        for j in 0..i {
            let s = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = s;
            covariance[(j, i)] = s;
        }
    }
    EnsembleStats { mean, covariance }
}

/// Which state components are observed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationMask {
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn new(observed: Vec<bool>) -> Result<Self, FilterError> {
        if !observed.iter().any(|&o| o) {
            return Err(FilterError::InvalidConfig(
                "at least one state must be observed",
            ));
        }
        Ok(Self { observed })
    }

    pub fn all(state_dim: usize) -> Self {
        Self {
            observed: vec![true; state_dim.max(1)],
        }
    }

    pub fn position_only() -> Self {
        Self {
            observed: vec![true, false],
        }
    }

    pub fn velocity_only() -> Self {
        Self {
            observed: vec![false, true],
        }
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn state_dim(&self) -> usize {
        self.observed.len()
    }

    /// Number of observed components, `m`.
    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn observed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| o.then_some(i))
    }

    /// The `m × dim` projection matrix for an augmented vector of length `dim`.
    pub fn projection(&self, dim: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.observed_count(), dim);
        for (row, col) in self.observed_indices().enumerate() {
            p[(row, col)] = 1.0;
        }
        p
    }
}

/// Selects the observed state components of an augmented vector.
pub fn observation_operator(mask: &ObservationMask, z: &[f64]) -> DVector<f64> {
    DVector::from_iterator(mask.observed_count(), mask.observed_indices().map(|i| z[i]))
}

/// Filter configuration: ensemble size, priors and noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub ensemble_size: usize,
    pub prior_state_mean: DVector<f64>,
    pub prior_state_cov: DMatrix<f64>,
    pub coeff_prior_low: f64,
    pub coeff_prior_high: f64,
    /// Model innovation covariance `C` (`d × d`).
    pub model_cov: DMatrix<f64>,
    /// Observation covariance `D` (`m × m`).
    pub observation_cov: DMatrix<f64>,
    pub seed: u64,
    /// Time of the prior ensemble; observations must come strictly after it.
    pub start_time: f64,
}

impl FilterConfig {
    /// Defaults for the mass-spring experiments: `N = 1000`, state prior
    /// `N([1; 1], 0.5² I)`, coefficient prior `U[−2, 12]`, `C = 0.02² I`,
    /// `D = 0.08² I_m`.
    pub fn mass_spring_default(mask: &ObservationMask) -> Self {
        let m = mask.observed_count();
        Self {
            ensemble_size: 1000,
            prior_state_mean: DVector::from_element(2, 1.0),
            prior_state_cov: DMatrix::identity(2, 2) * (0.5 * 0.5),
            coeff_prior_low: -2.0,
            coeff_prior_high: 12.0,
            model_cov: DMatrix::identity(2, 2) * (0.02 * 0.02),
            observation_cov: DMatrix::identity(m, m) * (0.08 * 0.08),
            seed: 0,
            start_time: 0.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.prior_state_mean.len()
    }

    pub fn validate(&self, mask: &ObservationMask) -> Result<(), FilterError> {
        let d = self.state_dim();
        if self.ensemble_size < 2 {
            return Err(FilterError::InvalidConfig(
                "ensemble size must be at least 2",
            ));
        }
        if d == 0 {
            return Err(FilterError::InvalidConfig("prior state mean is empty"));
        }
        if !(self.coeff_prior_low < self.coeff_prior_high)
            || !self.coeff_prior_low.is_finite()
            || !self.coeff_prior_high.is_finite()
        {
            return Err(FilterError::InvalidConfig(
                "coefficient prior bounds must be finite with low < high",
            ));
        }
        if !self.start_time.is_finite() || !is_finite_vector(&self.prior_state_mean) {
            return Err(FilterError::InvalidConfig("non-finite prior or start time"));
        }
        let square = |what: &'static str, a: &DMatrix<f64>, n: usize| {
            if a.nrows() != n || a.ncols() != n {
                Err(FilterError::Dimension {
                    what,
                    expected: n,
                    actual: if a.nrows() != n { a.nrows() } else { a.ncols() },
                })
            } else {
                Ok(())
            }
        };
        square("prior state covariance", &self.prior_state_cov, d)?;
        square("model innovation covariance", &self.model_cov, d)?;
        if mask.state_dim() != d {
            return Err(FilterError::Dimension {
                what: "observation mask",
                expected: d,
                actual: mask.state_dim(),
            });
        }
        square(
            "observation covariance",
            &self.observation_cov,
            mask.observed_count(),
        )?;
        for (what, a) in [
            ("prior state covariance", &self.prior_state_cov),
            ("model innovation covariance", &self.model_cov),
            ("observation covariance", &self.observation_cov),
        ] {
            if !is_finite_matrix(a) || psd_factor(a).is_none() {
                return Err(FilterError::NotPositiveSemiDefinite(what));
            }
        }
        Ok(())
    }
}

/// Generator used for filter noise. It shares the seed with the data
/// generator but runs on a separate ChaCha stream.
pub fn filter_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn factor(what: &'static str, a: &DMatrix<f64>) -> Result<DMatrix<f64>, FilterError> {
    psd_factor(a).ok_or(FilterError::NotPositiveSemiDefinite(what))
}

/// Draws the initial ensemble: Gaussian states, uniform coefficients.
pub fn sample_prior<R: Rng + ?Sized>(
    config: &FilterConfig,
    coefficient_count: usize,
    rng: &mut R,
) -> Result<Ensemble, FilterError> {
    let d = config.state_dim();
    if config.prior_state_cov.nrows() != d || config.prior_state_cov.ncols() != d {
        return Err(FilterError::Dimension {
            what: "prior state covariance",
            expected: d,
            actual: config.prior_state_cov.nrows(),
        });
    }
    if config.ensemble_size < 2 {
        return Err(FilterError::InvalidConfig(
            "ensemble size must be at least 2",
        ));
    }
    if !(config.coeff_prior_low < config.coeff_prior_high) {
        return Err(FilterError::InvalidConfig(
            "coefficient prior bounds must satisfy low < high",
        ));
    }
    let l = factor("prior state covariance", &config.prior_state_cov)?;
    let dim = d + coefficient_count;
    let width = config.coeff_prior_high - config.coeff_prior_low;
    let mut members = DMatrix::zeros(dim, config.ensemble_size);
    for member in members.as_mut_slice().chunks_exact_mut(dim) {
        let (state, coeffs) = member.split_at_mut(d);
        correlated_normal(&l, rng, state);
        for (s, mu) in state.iter_mut().zip(config.prior_state_mean.iter()) {
            *s += mu;
        }
        for c in coeffs {
            *c = config.coeff_prior_low + width * rng.random::<f64>();
        }
    }
    Ensemble::new(d, members)
}

/// Prediction step: propagate each member's state block and add model noise
/// `v ~ N(0, C)`. Coefficient blocks are not touched.
pub fn predict_ensemble<P: Propagator, R: Rng + ?Sized>(
    mut ens: Ensemble,
    propagator: &P,
    t0: f64,
    t1: f64,
    model_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Ensemble, FilterError> {
    let d = ens.state_dim;
    if propagator.state_dim() != d || propagator.coefficient_count() != ens.coefficient_count() {
        return Err(FilterError::Dimension {
            what: "propagator",
            expected: ens.dim(),
            actual: propagator.state_dim() + propagator.coefficient_count(),
        });
    }
    if model_cov.nrows() != d || model_cov.ncols() != d {
        return Err(FilterError::Dimension {
            what: "model innovation covariance",
            expected: d,
            actual: model_cov.nrows(),
        });
    }
    let l = factor("model innovation covariance", model_cov)?;
    let n = ens.size();
    let mut noise = vec![0.0; n * d];
    for v in noise.chunks_exact_mut(d) {
        correlated_normal(&l, rng, v);
    }

    let interval = propagator.interval(t0, t1);
    let dim = ens.dim();
    for (member, (z, v)) in ens
        .members
        .as_mut_slice()
        .chunks_exact_mut(dim)
        .zip(noise.chunks_exact(d))
        .enumerate()
    {
        let (state, coeffs) = z.split_at_mut(d);
        propagator
            .propagate(&interval, state, coeffs)
            .map_err(|source| FilterError::Integration { member, source })?;
        for (s, e) in state.iter_mut().zip(v) {
            *s += e;
        }
    }
    Ok(ens)
}

/// `K = Γ Pᵀ (P Γ Pᵀ + D)⁻¹` from the sample covariance `Γ` of `ens`.
pub fn kalman_gain(
    ens: &Ensemble,
    mask: &ObservationMask,
    observation_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>, FilterError> {
    let m = mask.observed_count();
    check_mask(ens, mask, observation_cov)?;
    let cov = ensemble_stats(ens).covariance;
    let idx: Vec<usize> = mask.observed_indices().collect();
    // Γ Pᵀ: the observed columns of Γ.
    let cross = cov.select_columns(idx.iter());
    let mut innovation = cross.select_rows(idx.iter());
    innovation += observation_cov;
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (innovation[(i, j)] + innovation[(j, i)]);
            innovation[(i, j)] = s;
            innovation[(j, i)] = s;
        }
    }
    let chol = innovation
        .cholesky()
        .ok_or(FilterError::SingularInnovation)?;
    let gain_t = chol.solve(&cross.transpose());
    let gain = gain_t.transpose();
    if !is_finite_matrix(&gain) {
        return Err(FilterError::SingularInnovation);
    }
    Ok(gain)
}

fn check_mask(
    ens: &Ensemble,
    mask: &ObservationMask,
    observation_cov: &DMatrix<f64>,
) -> Result<(), FilterError> {
    if mask.state_dim() != ens.state_dim() {
        return Err(FilterError::Dimension {
            what: "observation mask",
            expected: ens.state_dim(),
            actual: mask.state_dim(),
        });
    }
    let m = mask.observed_count();
    if observation_cov.nrows() != m || observation_cov.ncols() != m {
        return Err(FilterError::Dimension {
            what: "observation covariance",
            expected: m,
            actual: observation_cov.nrows(),
        });
    }
    Ok(())
}

/// Analysis step with the gain computed from the forecast ensemble.
pub fn analysis_update<R: Rng + ?Sized>(
    ens: Ensemble,
    y: &[f64],
    mask: &ObservationMask,
    observation_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Ensemble, FilterError> {
    let gain = kalman_gain(&ens, mask, observation_cov)?;
    analysis_update_with_gain(ens, &gain, y, mask, observation_cov, rng)
}

/// Shifts every member by `K (y + w − P z)` with `w ~ N(0, D)` drawn per
/// member.
pub fn analysis_update_with_gain<R: Rng + ?Sized>(
    mut ens: Ensemble,
    gain: &DMatrix<f64>,
    y: &[f64],
    mask: &ObservationMask,
    observation_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Ensemble, FilterError> {
    check_mask(&ens, mask, observation_cov)?;
    let m = mask.observed_count();
    let dim = ens.dim();
    if y.len() != m {
        return Err(FilterError::Dimension {
            what: "observation vector",
            expected: m,
            actual: y.len(),
        });
    }
    if gain.nrows() != dim || gain.ncols() != m {
        return Err(FilterError::Dimension {
            what: "gain matrix",
            expected: dim,
            actual: gain.nrows(),
        });
    }
    let l = factor("observation covariance", observation_cov)?;
    let idx: Vec<usize> = mask.observed_indices().collect();
    let mut w = vec![0.0; m];
    let mut innovation = vec![0.0; m];
    for z in ens.members.as_mut_slice().chunks_exact_mut(dim) {
        correlated_normal(&l, rng, &mut w);
        for k in 0..m {
            innovation[k] = y[k] + w[k] - z[idx[k]];
        }
        for (row, zi) in z.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, inn) in innovation.iter().enumerate() {
                acc += gain[(row, k)] * inn;
            }
            *zi += acc;
        }
    }
    if !is_finite_matrix(&ens.members) {
        return Err(FilterError::NonFinite);
    }
    Ok(ens)
}

/// Posterior statistics after one assimilation step (or of the prior).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl StepRecord {
    fn from_ensemble(time: f64, ens: &Ensemble) -> Self {
        let EnsembleStats { mean, covariance } = ensemble_stats(ens);
        Self {
            time,
            mean,
            covariance,
        }
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        libm::sqrt(self.covariance[(i, i)].max(0.0))
    }
}

/// Mean and two marginal standard deviations of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEstimate {
    pub mean: f64,
    pub two_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    state_dim: usize,
    pub prior: StepRecord,
    /// One record per assimilated observation.
    pub steps: Vec<StepRecord>,
    pub final_ensemble: Ensemble,
}

impl FilterResult {
    /// Assembles a result from stored records, checking that every record and
    /// the final ensemble share one augmented dimension.
    pub fn from_parts(
        state_dim: usize,
        prior: StepRecord,
        steps: Vec<StepRecord>,
        final_ensemble: Ensemble,
    ) -> Result<Self, FilterError> {
        let dim = prior.mean.len();
        if state_dim > dim {
            return Err(FilterError::InvalidConfig(
                "state dimension exceeds record dimension",
            ));
        }
        for (what, actual) in core::iter::once(("final ensemble", final_ensemble.dim()))
            .chain(steps.iter().map(|r| ("step record", r.mean.len())))
            .chain(core::iter::once((
                "prior covariance",
                prior.covariance.nrows(),
            )))
        {
            if actual != dim {
                return Err(FilterError::Dimension {
                    what,
                    expected: dim,
                    actual,
                });
            }
        }
        Ok(Self {
            state_dim,
            prior,
            steps,
            final_ensemble,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn coefficient_count(&self) -> usize {
        self.prior.mean.len() - self.state_dim
    }

    /// Latest record: the last step, or the prior when nothing was assimilated.
    pub fn last(&self) -> &StepRecord {
        self.steps.last().unwrap_or(&self.prior)
    }

    pub fn coefficient_estimates_at(&self, record: &StepRecord) -> Vec<CoefficientEstimate> {
        (self.state_dim..record.mean.len())
            .map(|i| CoefficientEstimate {
                mean: record.mean[i],
                two_std: 2.0 * record.std_dev(i),
            })
            .collect()
    }

    pub fn final_coefficients(&self) -> Vec<CoefficientEstimate> {
        self.coefficient_estimates_at(self.last())
    }

    pub fn final_coefficient_means(&self) -> Vec<f64> {
        self.final_coefficients().iter().map(|c| c.mean).collect()
    }
}

/// Runs the filter over every observation in `data`.
pub fn run_filter<P: Propagator>(
    config: &FilterConfig,
    propagator: &P,
    data: &ObservationSeries,
) -> Result<FilterResult, FilterError> {
    let mask = data.mask();
    config.validate(mask)?;
    if propagator.state_dim() != config.state_dim() {
        return Err(FilterError::Dimension {
            what: "propagator state",
            expected: config.state_dim(),
            actual: propagator.state_dim(),
        });
    }
    let mut rng = filter_rng(config.seed);
    let mut ens = sample_prior(config, propagator.coefficient_count(), &mut rng)?;
    let prior = StepRecord::from_ensemble(config.start_time, &ens);
    let mut steps = Vec::with_capacity(data.len());
    let mut t_prev = config.start_time;
    for (index, (&t, y)) in data.times().iter().zip(data.rows()).enumerate() {
        if !(t > t_prev) {
            return Err(FilterError::TimeOrder(index));
        }
        let wrap = |source| FilterError::Step {
            index,
            source: Box::new(source),
        };
        ens = predict_ensemble(ens, propagator, t_prev, t, &config.model_cov, &mut rng)
            .map_err(wrap)?;
        ens = analysis_update(ens, y, mask, &config.observation_cov, &mut rng).map_err(wrap)?;
        steps.push(StepRecord::from_ensemble(t, &ens));
        t_prev = t;
    }
    Ok(FilterResult {
        state_dim: config.state_dim(),
        prior,
        steps,
        final_ensemble: ens,
    })
}

/// [`run_filter`] for the forced mass-spring system with a Fourier forcing model.
pub fn run_mass_spring_filter(
    config: &FilterConfig,
    model: &FourierModel,
    params: &MassSpringParams,
    data: &ObservationSeries,
    settings: &IntegratorSettings,
) -> Result<FilterResult, FilterError> {
    let prop = ForcedMassSpring::new(*params, model.clone(), settings)
        .map_err(|_| FilterError::InvalidConfig("invalid integrator settings"))?;
    run_filter(config, &prop, data)
}
