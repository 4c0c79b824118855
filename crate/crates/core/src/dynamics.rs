//! Forced, damped mass-spring system `m p'' + b p' + k p = θ(t)` written as a
//! first-order system in position and velocity.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::enkf::Propagator;
use crate::fourier::{FourierError, FourierModel};
use crate::ode::{self, DenseOutput, IntegrationError, IntegratorSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("mass-spring constants must be positive and finite (m = {m}, b = {b}, k = {k})")]
    InvalidParams { m: f64, b: f64, k: f64 },
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Mass, damping coefficient and spring constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassSpringParams {
    m: f64,
    b: f64,
    k: f64,
}

impl MassSpringParams {
    pub fn new(m: f64, b: f64, k: f64) -> Result<Self, DynamicsError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(m) && ok(b) && ok(k) {
            Ok(Self { m, b, k })
        } else {
            Err(DynamicsError::InvalidParams { m, b, k })
        }
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn damping(&self) -> f64 {
        self.b
    }

    pub fn stiffness(&self) -> f64 {
        self.k
    }

    /// Mechanical energy `½ m v² + ½ k p²`.
    pub fn energy(&self, x: StateVector) -> f64 {
        0.5 * self.m * x.v * x.v + 0.5 * self.k * x.p * x.p
    }
}

impl Default for MassSpringParams {
    /// `m = 10`, `b = 3`, `k = 5`.
    fn default() -> Self {
        Self {
            m: 10.0,
            b: 3.0,
            k: 5.0,
        }
    }
}

/// Position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub p: f64,
    pub v: f64,
}

impl StateVector {
    pub const DIM: usize = 2;

    pub fn new(p: f64, v: f64) -> Self {
        Self { p, v }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.p, self.v]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { p: x[0], v: x[1] }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite()
    }
}

/// External forcing `θ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    /// `amplitude · sin(angular_frequency · t)`.
    Sine {
        amplitude: f64,
        angular_frequency: f64,
    },
    /// `slope · t + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `a3 (t − shift)³ + a2 t² + a0`.
    CubicShifted {
        a3: f64,
        shift: f64,
        a2: f64,
        a0: f64,
    },
    /// A fitted sine/cosine model. Build with [`ForcingSpec::fourier_estimate`]
    /// so the coefficient count is checked.
    FourierEstimate {
        model: FourierModel,
        coefficients: Vec<f64>,
    },
}

impl ForcingSpec {
    pub fn zero() -> Self {
        ForcingSpec::Linear {
            slope: 0.0,
            intercept: 0.0,
        }
    }

    pub fn fourier_estimate(
        model: FourierModel,
        coefficients: Vec<f64>,
    ) -> Result<Self, FourierError> {
        model.check_coefficients(&coefficients)?;
        Ok(ForcingSpec::FourierEstimate {
            model,
            coefficients,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ForcingSpec::Sine {
                amplitude,
                angular_frequency,
            } => amplitude * libm::sin(angular_frequency * t),
            ForcingSpec::Linear { slope, intercept } => slope * t + intercept,
            ForcingSpec::CubicShifted { a3, shift, a2, a0 } => {
                let s = t - shift;
                a3 * s * s * s + a2 * t * t + a0
            }
            ForcingSpec::FourierEstimate {
                model,
                coefficients,
            } => model.evaluate_unchecked(coefficients, t),
        }
    }
}

pub fn forcing_eval(spec: &ForcingSpec, t: f64) -> f64 {
    spec.eval(t)
}

/// `dx/dt = [v; (θ − k p − b v) / m]`.
pub fn mass_spring_rhs(
    _t: f64,
    x: StateVector,
    params: &MassSpringParams,
    theta: f64,
) -> StateVector {
    StateVector {
        p: x.v,
        v: (theta - params.k * x.p - params.b * x.v) / params.m,
    }
}

#[inline]
fn rhs_slice(params: &MassSpringParams, theta: f64, x: &[f64], dx: &mut [f64]) {
    dx[0] = x[1];
    dx[1] = (theta - params.k * x[0] - params.b * x[1]) / params.m;
}

/// Adaptive integration of the mass-spring system under `forcing`.
pub fn solve_forced(
    params: &MassSpringParams,
    forcing: &ForcingSpec,
    x0: StateVector,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<DenseOutput, IntegrationError> {
    ode::integrate_adaptive(
        |t, x, dx| rhs_slice(params, forcing.eval(t), x, dx),
        t0,
        t1,
        &x0.to_array(),
        settings,
    )
}

/// Fixed-step integration of the mass-spring system under `forcing`.
pub fn step_forced(
    params: &MassSpringParams,
    forcing: &ForcingSpec,
    x0: StateVector,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<StateVector, IntegrationError> {
    let x = ode::integrate_fixed(
        |t, x, dx| rhs_slice(params, forcing.eval(t), x, dx),
        t0,
        t1,
        &x0.to_array(),
        settings,
    )?;
    Ok(StateVector::from_slice(&x))
}

/// Ensemble propagator for the augmented mass-spring state: the forcing is the
/// Fourier model evaluated with each member's (constant) coefficients.
#[derive(Debug, Clone)]
pub struct ForcedMassSpring {
    params: MassSpringParams,
    model: FourierModel,
    substeps: usize,
}

/// Basis values at every RK4 half-step node of one assimilation interval,
/// shared by all members.
#[derive(Debug, Clone)]
pub struct BasisTable {
    t0: f64,
    t1: f64,
    width: usize,
    values: Vec<f64>,
}

impl ForcedMassSpring {
    pub fn new(
        params: MassSpringParams,
        model: FourierModel,
        settings: &IntegratorSettings,
    ) -> Result<Self, DynamicsError> {
        settings.validate()?;
        Ok(Self {
            params,
            model,
            substeps: settings.substeps_per_interval,
        })
    }

    pub fn params(&self) -> &MassSpringParams {
        &self.params
    }

    pub fn model(&self) -> &FourierModel {
        &self.model
    }
}

impl Propagator for ForcedMassSpring {
    type Interval = BasisTable;

    fn state_dim(&self) -> usize {
        StateVector::DIM
    }

    fn coefficient_count(&self) -> usize {
        self.model.coefficient_count()
    }

    fn interval(&self, t0: f64, t1: f64) -> BasisTable {
        let width = self.model.coefficient_count();
        let nodes = 2 * self.substeps + 1;
        let mut values = vec![0.0; nodes * width];
        for (node, row) in values.chunks_exact_mut(width).enumerate() {
            let t = ode::rk4_node_time(t0, t1, self.substeps, node);
            self.model.basis_into(t, row);
        }
        BasisTable {
            t0,
            t1,
            width,
            values,
        }
    }

    fn propagate(
        &self,
        interval: &BasisTable,
        state: &mut [f64],
        coefficients: &[f64],
    ) -> Result<(), IntegrationError> {
        debug_assert_eq!(coefficients.len(), interval.width);
        let nodes = 2 * self.substeps + 1;
        let mut theta = [0.0f64; 64];
        let mut theta_heap;
        let theta: &mut [f64] = if nodes <= theta.len() {
            &mut theta[..nodes]
        } else {
            theta_heap = vec![0.0; nodes];
            &mut theta_heap
        };
        for (th, row) in theta
            .iter_mut()
            .zip(interval.values.chunks_exact(interval.width))
        {
            *th = row.iter().zip(coefficients).map(|(b, c)| b * c).sum();
        }
        let params = &self.params;
        ode::integrate_fixed_nodes(
            |_, node, x, dx| rhs_slice(params, theta[node], x, dx),
            interval.t0,
            interval.t1,
            state,
            self.substeps,
        )
    }
}

/// Advances one augmented member across `[t0, t1]` with its coefficients held
/// fixed; the coefficients themselves are not part of the returned state.
pub fn augmented_predict(
    x: StateVector,
    coeffs: &[f64],
    model: &FourierModel,
    params: &MassSpringParams,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<StateVector, DynamicsError> {
    model.check_coefficients(coeffs)?;
    let prop = ForcedMassSpring::new(*params, model.clone(), settings)?;
    let table = prop.interval(t0, t1);
    let mut state = x.to_array();
    prop.propagate(&table, &mut state, coeffs)?;
    Ok(StateVector::from_slice(&state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::preset_model;
    use core::f64::consts::PI;

    fn defaults() -> MassSpringParams {
        MassSpringParams::new(10.0, 3.0, 5.0).unwrap()
    }

    #[test]
    fn forcing_values() {
        let sine = ForcingSpec::Sine {
            amplitude: 1.0,
            angular_frequency: 1.0,
        };
        assert!((forcing_eval(&sine, PI / 2.0) - 1.0).abs() < 1e-15);
        let lin = ForcingSpec::Linear {
            slope: -0.07,
            intercept: 2.0,
        };
        assert_eq!(forcing_eval(&lin, 0.0), 2.0);
        let cubic = ForcingSpec::CubicShifted {
            a3: 0.0001,
            shift: 25.0,
            a2: -0.001,
            a0: 3.0,
        };
        assert!((forcing_eval(&cubic, 25.0) - 2.375).abs() < 1e-12);
    }

    #[test]
    fn fourier_estimate_checks_length() {
        let m = preset_model("two-term").unwrap();
        assert!(ForcingSpec::fourier_estimate(m.clone(), vec![1.0]).is_err());
        let f = ForcingSpec::fourier_estimate(m, vec![1.0, 0.0]).unwrap();
        assert!((f.eval(PI / 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn params_rejected() {
        assert!(MassSpringParams::new(0.0, 3.0, 5.0).is_err());
        assert!(MassSpringParams::new(10.0, -3.0, 5.0).is_err());
        assert!(MassSpringParams::new(10.0, 3.0, f64::NAN).is_err());
    }

    #[test]
    fn rhs_examples() {
        let p = defaults();
        let origin = mass_spring_rhs(0.0, StateVector::new(0.0, 0.0), &p, 0.0);
        assert_eq!(origin, StateVector::new(0.0, 0.0));
        let d = mass_spring_rhs(0.0, StateVector::new(2.0, 0.0), &p, 0.0);
        assert_eq!(d, StateVector::new(0.0, -1.0));
        let theta0 = 3.5;
        let eq = mass_spring_rhs(
            1.0,
            StateVector::new(theta0 / p.stiffness(), 0.0),
            &p,
            theta0,
        );
        assert!(eq.p == 0.0 && eq.v.abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_match_unforced_bitwise() {
        let p = defaults();
        let s = IntegratorSettings::default();
        let model = preset_model("low").unwrap();
        let x0 = StateVector::new(2.0, 0.0);
        let a = augmented_predict(x0, &[0.0; 8], &model, &p, 0.5, 1.0, &s).unwrap();
        let b = step_forced(&p, &ForcingSpec::zero(), x0, 0.5, 1.0, &s).unwrap();
        assert_eq!(a.p.to_bits(), b.p.to_bits());
        assert_eq!(a.v.to_bits(), b.v.to_bits());
    }

    #[test]
    fn two_term_matches_sine_forcing() {
        let p = defaults();
        let s = IntegratorSettings::default();
        let model = preset_model("two-term").unwrap();
        let sine = ForcingSpec::Sine {
            amplitude: 1.0,
            angular_frequency: 1.0,
        };
        let x0 = StateVector::new(2.0, 0.0);
        let dense = solve_forced(&p, &sine, x0, 0.0, 10.0, &s).unwrap();
        let mut x = x0;
        for j in 0..20 {
            let (t0, t1) = (0.5 * j as f64, 0.5 * (j + 1) as f64);
            x = augmented_predict(x, &[1.0, 0.0], &model, &p, t0, t1, &s).unwrap();
            let r = dense.eval(t1).unwrap();
            assert!((x.p - r[0]).abs() < 1e-5 && (x.v - r[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn tiny_interval_is_continuous() {
        let p = defaults();
        let s = IntegratorSettings::default();
        let model = preset_model("two-term").unwrap();
        let x0 = StateVector::new(2.0, -0.3);
        let x = augmented_predict(x0, &[1.0, 0.5], &model, &p, 3.0, 3.0 + 1e-8, &s).unwrap();
        assert!((x.p - x0.p).abs() < 1e-6 && (x.v - x0.v).abs() < 1e-6);
    }

    #[test]
    fn coefficient_count_checked() {
        let model = preset_model("low").unwrap();
        let r = augmented_predict(
            StateVector::default(),
            &[0.0; 3],
            &model,
            &defaults(),
            0.0,
            0.5,
            &IntegratorSettings::default(),
        );
        assert!(matches!(r, Err(DynamicsError::Fourier(_))));
    }
}
