//! Flat `key = value` run configuration.
//!
//! A run starts from an experiment preset. Config file entries are applied in
//! order, then command-line flags, so later values win. Every key mirrors a
//! field of the truth, filter or integrator settings.

use std::fmt;
use std::str::FromStr;

use fenkf_core::{
    ExperimentConfig, ExperimentPreset, FilterConfig, ForcingSpec, IntegratorSettings,
    MassSpringParams, ModelPreset, ObservationMask, StateVector, TruthSpec,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::format::g17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown preset `{0}`; valid presets: {list}", list = preset_list())]
    UnknownPreset(String),
    #[error("invalid seed list `{0}`: use `n`, `a..b` (inclusive) or `a,b,c`")]
    Seeds(String),
    #[error("{0}")]
    Invalid(String),
}

/// Comma-separated names of the experiment presets.
pub fn preset_list() -> String {
    ExperimentPreset::ALL.map(|p| p.name()).join(", ")
}

pub fn parse_preset(name: &str) -> Result<ExperimentPreset, ConfigError> {
    name.parse()
        .map_err(|_| ConfigError::UnknownPreset(name.to_string()))
}

/// Parses `n`, `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, ConfigError> {
    let err = || ConfigError::Seeds(text.to_string());
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| err())?;
        let b: u64 = b.trim().parse().map_err(|_| err())?;
        if a > b {
            return Err(err());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| err()))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(err());
    }
    Ok(seeds)
}

/// Parses the text of a config file into ordered key/value pairs. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Which state components are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observe {
    Position,
    Velocity,
    Both,
}

impl Observe {
    pub fn mask(self) -> ObservationMask {
        match self {
            Observe::Position => ObservationMask::position_only(),
            Observe::Velocity => ObservationMask::velocity_only(),
            Observe::Both => ObservationMask::all(2),
        }
    }

    pub fn from_mask(mask: &ObservationMask) -> Option<Self> {
        match mask.observed() {
            [true, false] => Some(Observe::Position),
            [false, true] => Some(Observe::Velocity),
            [true, true] => Some(Observe::Both),
            _ => None,
        }
    }
}

impl fmt::Display for Observe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observe::Position => "position",
            Observe::Velocity => "velocity",
            Observe::Both => "both",
        })
    }
}

impl FromStr for Observe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "position" => Ok(Observe::Position),
            "velocity" => Ok(Observe::Velocity),
            "both" => Ok(Observe::Both),
            _ => Err("expected position, velocity or both".into()),
        }
    }
}

/// Named truth forcings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthForcing {
    /// `sin t`
    Sine,
    /// `-0.07 t + 2`
    Linear,
    /// `0.0001 (t - 25)^3 - 0.001 t^2 + 3`
    Cubic,
    Zero,
}

impl TruthForcing {
    pub fn spec(self) -> ForcingSpec {
        match self {
            TruthForcing::Sine => ExperimentPreset::S31Full.forcing(),
            TruthForcing::Linear => ExperimentPreset::S33Linear.forcing(),
            TruthForcing::Cubic => ExperimentPreset::S33Cubic.forcing(),
            TruthForcing::Zero => ForcingSpec::zero(),
        }
    }

    fn of_preset(p: ExperimentPreset) -> Self {
        match p {
            ExperimentPreset::S33Linear => TruthForcing::Linear,
            ExperimentPreset::S33Cubic => TruthForcing::Cubic,
            _ => TruthForcing::Sine,
        }
    }
}

impl fmt::Display for TruthForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthForcing::Sine => "sine",
            TruthForcing::Linear => "linear",
            TruthForcing::Cubic => "cubic",
            TruthForcing::Zero => "zero",
        })
    }
}

impl FromStr for TruthForcing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sine" => Ok(TruthForcing::Sine),
            "linear" => Ok(TruthForcing::Linear),
            "cubic" => Ok(TruthForcing::Cubic),
            "zero" => Ok(TruthForcing::Zero),
            _ => Err("expected sine, linear, cubic or zero".into()),
        }
    }
}

/// Every tunable of a run as plain scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub preset: ExperimentPreset,
    pub seeds: Vec<u64>,
    pub model: ModelPreset,
    pub observe: Observe,
    pub truth_forcing: TruthForcing,
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub x0_position: f64,
    pub x0_velocity: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt_obs: f64,
    pub noise_std: f64,
    pub ensemble_size: usize,
    pub prior_position_mean: f64,
    pub prior_velocity_mean: f64,
    pub prior_state_std: f64,
    pub coeff_prior_low: f64,
    pub coeff_prior_high: f64,
    pub model_noise_std: f64,
    pub observation_noise_std: f64,
    pub substeps_per_interval: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub predict_states: bool,
}

impl RunSettings {
    pub fn from_preset(preset: ExperimentPreset) -> Self {
        let cfg = preset.config();
        let truth = &cfg.truth;
        let filter = &cfg.filter;
        Self {
            preset,
            seeds: cfg.seeds.clone(),
            model: preset.model_preset(),
            observe: Observe::from_mask(&cfg.mask).expect("presets use two-state masks"),
            truth_forcing: TruthForcing::of_preset(preset),
            mass: truth.params.mass(),
            damping: truth.params.damping(),
            stiffness: truth.params.stiffness(),
            x0_position: truth.x0.p,
            x0_velocity: truth.x0.v,
            t_start: truth.t_start,
            t_end: truth.t_end,
            dt_obs: truth.dt_obs,
            noise_std: truth.noise_std,
            ensemble_size: filter.ensemble_size,
            prior_position_mean: filter.prior_state_mean[0],
            prior_velocity_mean: filter.prior_state_mean[1],
            prior_state_std: filter.prior_state_cov[(0, 0)].sqrt(),
            coeff_prior_low: filter.coeff_prior_low,
            coeff_prior_high: filter.coeff_prior_high,
            model_noise_std: filter.model_cov[(0, 0)].sqrt(),
            observation_noise_std: filter.observation_cov[(0, 0)].sqrt(),
            substeps_per_interval: cfg.integrator.substeps_per_interval,
            abs_tol: cfg.integrator.abs_tol,
            rel_tol: cfg.integrator.rel_tol,
            predict_states: cfg.predict_states,
        }
    }

    /// Applies pairs in order. A `preset` key resets everything to that
    /// preset's defaults, so it only makes sense first.
    pub fn apply_all<'a, I>(&mut self, pairs: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in pairs {
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Value {
                key: key.into(),
                value: value.into(),
                reason: e.to_string(),
            })
        }
        match key {
            "preset" => *self = Self::from_preset(parse_preset(value)?),
            "seed" | "seeds" => self.seeds = parse_seeds(value)?,
            "model" => self.model = num(key, value)?,
            "observe" => self.observe = num(key, value)?,
            "truth_forcing" => self.truth_forcing = num(key, value)?,
            "mass" => self.mass = num(key, value)?,
            "damping" => self.damping = num(key, value)?,
            "stiffness" => self.stiffness = num(key, value)?,
            "x0_position" => self.x0_position = num(key, value)?,
            "x0_velocity" => self.x0_velocity = num(key, value)?,
            "t_start" => self.t_start = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "dt_obs" => self.dt_obs = num(key, value)?,
            "noise_std" => self.noise_std = num(key, value)?,
            "ensemble_size" => self.ensemble_size = num(key, value)?,
            "prior_position_mean" => self.prior_position_mean = num(key, value)?,
            "prior_velocity_mean" => self.prior_velocity_mean = num(key, value)?,
            "prior_state_std" => self.prior_state_std = num(key, value)?,
            "coeff_prior_low" => self.coeff_prior_low = num(key, value)?,
            "coeff_prior_high" => self.coeff_prior_high = num(key, value)?,
            "model_noise_std" => self.model_noise_std = num(key, value)?,
            "observation_noise_std" => self.observation_noise_std = num(key, value)?,
            "substeps_per_interval" => self.substeps_per_interval = num(key, value)?,
            "abs_tol" => self.abs_tol = num(key, value)?,
            "rel_tol" => self.rel_tol = num(key, value)?,
            "predict_states" => self.predict_states = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every setting as `key`, `value` text, in a fixed order. Feeding the
    /// pairs back through [`RunSettings::apply`] reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let seeds = self
            .seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("preset", self.preset.to_string()),
            ("seeds", seeds),
            ("model", self.model.to_string()),
            ("observe", self.observe.to_string()),
            ("truth_forcing", self.truth_forcing.to_string()),
            ("mass", g17(self.mass)),
            ("damping", g17(self.damping)),
            ("stiffness", g17(self.stiffness)),
            ("x0_position", g17(self.x0_position)),
            ("x0_velocity", g17(self.x0_velocity)),
            ("t_start", g17(self.t_start)),
            ("t_end", g17(self.t_end)),
            ("dt_obs", g17(self.dt_obs)),
            ("noise_std", g17(self.noise_std)),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("prior_position_mean", g17(self.prior_position_mean)),
            ("prior_velocity_mean", g17(self.prior_velocity_mean)),
            ("prior_state_std", g17(self.prior_state_std)),
            ("coeff_prior_low", g17(self.coeff_prior_low)),
            ("coeff_prior_high", g17(self.coeff_prior_high)),
            ("model_noise_std", g17(self.model_noise_std)),
            ("observation_noise_std", g17(self.observation_noise_std)),
            (
                "substeps_per_interval",
                self.substeps_per_interval.to_string(),
            ),
            ("abs_tol", g17(self.abs_tol)),
            ("rel_tol", g17(self.rel_tol)),
            ("predict_states", self.predict_states.to_string()),
        ]
    }

    /// Builds and validates the experiment these settings describe.
    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        let params = MassSpringParams::new(self.mass, self.damping, self.stiffness)
            .map_err(|e| invalid(&e))?;
        let truth = TruthSpec {
            params,
            forcing: self.truth_forcing.spec(),
            x0: StateVector::new(self.x0_position, self.x0_velocity),
            t_start: self.t_start,
            t_end: self.t_end,
            dt_obs: self.dt_obs,
            noise_std: self.noise_std,
            seed: self.seeds[0],
        };
        truth.grid_len().map_err(|e| invalid(&e))?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(ConfigError::Invalid(
                "noise_std must be non-negative".into(),
            ));
        }
        let mask = self.observe.mask();
        let m = mask.observed_count();
        let var = |s: f64| s * s;
        let filter = FilterConfig {
            ensemble_size: self.ensemble_size,
            prior_state_mean: DVector::from_vec(vec![
                self.prior_position_mean,
                self.prior_velocity_mean,
            ]),
            prior_state_cov: DMatrix::identity(2, 2) * var(self.prior_state_std),
            coeff_prior_low: self.coeff_prior_low,
            coeff_prior_high: self.coeff_prior_high,
            model_cov: DMatrix::identity(2, 2) * var(self.model_noise_std),
            observation_cov: DMatrix::identity(m, m) * var(self.observation_noise_std),
            seed: self.seeds[0],
            start_time: self.t_start,
        };
        filter.validate(&mask).map_err(|e| invalid(&e))?;
        let integrator = IntegratorSettings {
            substeps_per_interval: self.substeps_per_interval,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
        };
        integrator.validate().map_err(|e| invalid(&e))?;
        Ok(ExperimentConfig {
            name: self.preset.to_string(),
            truth,
            model: self.model.model(),
            mask,
            filter,
            seeds: self.seeds.clone(),
            integrator,
            predict_states: self.predict_states,
        })
    }
}
