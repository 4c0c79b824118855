//! Sine/cosine approximation models for time-varying parameters.
//!
//! A [`FourierModel`] fixes the angular frequencies `ω_1..ω_M`; the estimate is
//!
//! ```text
//! θ(t) = Σ_i  c[2i] · sin(ω_i t) + c[2i + 1] · cos(ω_i t)      (0-based)
//! ```
//!
//! so each frequency owns a sine coefficient followed by a cosine coefficient.
//! There is no constant term.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FourierError {
    #[error("a Fourier model needs at least one frequency")]
    Empty,
    #[error("angular frequency {0} is not a positive finite number")]
    NonPositiveFrequency(f64),
    #[error("angular frequency {0} appears more than once")]
    DuplicateFrequency(f64),
    #[error("expected {expected} coefficients, got {actual}")]
    CoefficientCount { expected: usize, actual: usize },
    #[error("unknown model preset `{0}` (expected one of: two-term, low, high, mixed, lower)")]
    UnknownPreset(alloc::string::String),
    #[error("invalid quadrature request: {0}")]
    InvalidQuadrature(&'static str),
}

/// Ordered angular frequencies of a sine/cosine approximation model.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierModel {
    frequencies: Vec<f64>,
}

impl FourierModel {
    pub fn new(frequencies: Vec<f64>) -> Result<Self, FourierError> {
        if frequencies.is_empty() {
            return Err(FourierError::Empty);
        }
        for (i, &w) in frequencies.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(FourierError::NonPositiveFrequency(w));
            }
            if frequencies[..i].contains(&w) {
                return Err(FourierError::DuplicateFrequency(w));
            }
        }
        Ok(Self { frequencies })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Number of sine/cosine pairs, `M`.
    pub fn term_pairs(&self) -> usize {
        self.frequencies.len()
    }

    /// Number of coefficients, `2M`.
    pub fn coefficient_count(&self) -> usize {
        2 * self.frequencies.len()
    }

    pub fn check_coefficients(&self, coeffs: &[f64]) -> Result<(), FourierError> {
        if coeffs.len() != self.coefficient_count() {
            return Err(FourierError::CoefficientCount {
                expected: self.coefficient_count(),
                actual: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the model with the given coefficients at time `t`.
    pub fn evaluate(&self, coeffs: &[f64], t: f64) -> Result<f64, FourierError> {
        self.check_coefficients(coeffs)?;
        Ok(self.evaluate_unchecked(coeffs, t))
    }

    pub(crate) fn evaluate_unchecked(&self, coeffs: &[f64], t: f64) -> f64 {
        let mut acc = 0.0;
        for (w, c) in self.frequencies.iter().zip(coeffs.chunks_exact(2)) {
            let (s, co) = libm::sincos(w * t);
            acc += c[0] * s + c[1] * co;
        }
        acc
    }

    /// Writes the basis values `[sin(ω_1 t), cos(ω_1 t), ...]` into `out`.
    pub fn basis_into(&self, t: f64, out: &mut [f64]) {
        for (w, b) in self.frequencies.iter().zip(out.chunks_exact_mut(2)) {
            let (s, c) = libm::sincos(w * t);
            b[0] = s;
            b[1] = c;
        }
    }
}

/// Free-function form of [`FourierModel::evaluate`].
pub fn evaluate_fourier(model: &FourierModel, coeffs: &[f64], t: f64) -> Result<f64, FourierError> {
    model.evaluate(coeffs, t)
}

/// Named approximation models used by the bundled experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelPreset {
    /// `c1 sin(t) + c2 cos(t)`.
    TwoTerm,
    /// Frequencies 1, 1/2, 1/4, 1/8.
    Low,
    /// Frequencies 1, 1.125, 1.25, 1.5.
    High,
    /// Frequencies 1, 1.5, 0.5, 1.75, 0.25.
    Mixed,
    /// Frequencies 0.125, 0.0625, 0.03125, 0.0156 for slowly varying inputs.
    Lower,
}

impl ModelPreset {
    pub const ALL: [ModelPreset; 5] = [
        ModelPreset::TwoTerm,
        ModelPreset::Low,
        ModelPreset::High,
        ModelPreset::Mixed,
        ModelPreset::Lower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelPreset::TwoTerm => "two-term",
            ModelPreset::Low => "low",
            ModelPreset::High => "high",
            ModelPreset::Mixed => "mixed",
            ModelPreset::Lower => "lower",
        }
    }

    pub fn frequencies(self) -> &'static [f64] {
        match self {
            ModelPreset::TwoTerm => &[1.0],
            ModelPreset::Low => &[1.0, 0.5, 0.25, 0.125],
            ModelPreset::High => &[1.0, 1.125, 1.25, 1.5],
            ModelPreset::Mixed => &[1.0, 1.5, 0.5, 1.75, 0.25],
            // 0.0156 is kept as printed rather than 1/64.
            ModelPreset::Lower => &[0.125, 0.0625, 0.03125, 0.0156],
        }
    }

    pub fn model(self) -> FourierModel {
        FourierModel {
            frequencies: self.frequencies().to_vec(),
        }
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelPreset {
    type Err = FourierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| FourierError::UnknownPreset(s.into()))
    }
}

/// Looks up a preset model by its CLI name.
pub fn preset_model(name: &str) -> Result<FourierModel, FourierError> {
    Ok(name.parse::<ModelPreset>()?.model())
}

/// Classical Fourier coefficients of a function over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierOracleResult {
    pub a0: f64,
    /// Cosine coefficients `a_1..a_Q`.
    pub a: Vec<f64>,
    /// Sine coefficients `b_1..b_Q`.
    pub b: Vec<f64>,
    pub period: f64,
}

impl FourierOracleResult {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// The harmonics `2πq/P` as a [`FourierModel`] together with coefficients
    /// in its sin/cos layout. The `a0/2` offset is not representable and is
    /// dropped.
    pub fn to_model(&self) -> Result<(FourierModel, Vec<f64>), FourierError> {
        let freqs = (1..=self.order())
            .map(|q| 2.0 * core::f64::consts::PI * q as f64 / self.period)
            .collect();
        let coeffs = self
            .b
            .iter()
            .zip(&self.a)
            .flat_map(|(&b, &a)| [b, a])
            .collect();
        Ok((FourierModel::new(freqs)?, coeffs))
    }
}

/// Computes `a_0..a_Q`, `b_1..b_Q` of `h` over `[0, period]` by composite
/// Simpson quadrature with `quad_points` subintervals (rounded up to even).
pub fn fourier_coefficients_oracle<H>(
    h: H,
    period: f64,
    order: usize,
    quad_points: usize,
) -> Result<FourierOracleResult, FourierError>
where
    H: Fn(f64) -> f64,
{
    if !(period > 0.0 && period.is_finite()) {
        return Err(FourierError::InvalidQuadrature("period must be positive"));
    }
    if order == 0 {
        return Err(FourierError::InvalidQuadrature("order must be at least 1"));
    }
    if quad_points < 64 {
        return Err(FourierError::InvalidQuadrature(
            "at least 64 quadrature points are required",
        ));
    }
    let n = quad_points + quad_points % 2;
    let step = period / n as f64;
    let values: Vec<f64> = (0..=n).map(|i| h(i as f64 * step)).collect();

    let simpson = |weight: &dyn Fn(f64) -> f64| -> f64 {
        let mut acc = 0.0;
        for (i, v) in values.iter().enumerate() {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * v * weight(i as f64 * step);
        }
        acc * step / 3.0
    };

    let scale = 2.0 / period;
    let a0 = scale * simpson(&|_| 1.0);
    let mut a = Vec::with_capacity(order);
    let mut b = Vec::with_capacity(order);
    for q in 1..=order {
        let w = 2.0 * core::f64::consts::PI * q as f64 / period;
        a.push(scale * simpson(&|t| libm::cos(w * t)));
        b.push(scale * simpson(&|t| libm::sin(w * t)));
    }
    Ok(FourierOracleResult { a0, a, b, period })
}
