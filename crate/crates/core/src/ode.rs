//! Explicit Runge–Kutta integrators.
//!
//! A fixed-step classical RK4 drives ensemble propagation, where every member
//! must follow exactly the same arithmetic path. An embedded Dormand–Prince
//! 5(4) pair with continuous extension produces reference trajectories that can
//! be sampled at arbitrary times.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Failure modes of the integrators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size {h:e} fell below the underflow limit at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),
    #[error("invalid integration interval [{t0}, {t1}]")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(&'static str),
    #[error("dense output queried at t = {t} outside [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
}

/// Step-size and tolerance settings shared by the fixed and adaptive methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    /// Number of RK4 steps taken across one call of [`integrate_fixed`].
    pub substeps_per_interval: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            substeps_per_interval: 10,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        if self.substeps_per_interval == 0 {
            return Err(IntegrationError::InvalidSettings(
                "substeps_per_interval must be at least 1",
            ));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(IntegrationError::InvalidSettings(
                "tolerances must be positive",
            ));
        }
        Ok(())
    }
}

fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Scratch buffers for one RK4 step.
struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// One RK4 step in place. `node` is the index of the step start on the
/// half-step node grid: stages are evaluated at nodes `node`, `node + 1`
/// (twice) and `node + 2`.
#[allow(clippy::needless_range_loop)]
fn rk4_step_in_place<F>(rhs: &mut F, t: f64, node: usize, x: &mut [f64], h: f64, w: &mut Rk4Work)
where
    F: FnMut(f64, usize, &[f64], &mut [f64]),
{
    let half = 0.5 * h;
    let t_mid = t + half;
    let t_end = t + h;

    rhs(t, node, x, &mut w.k1);
    for i in 0..x.len() {
        w.tmp[i] = x[i] + half * w.k1[i];
    }
    rhs(t_mid, node + 1, &w.tmp, &mut w.k2);
    for i in 0..x.len() {
        w.tmp[i] = x[i] + half * w.k2[i];
    }
    rhs(t_mid, node + 1, &w.tmp, &mut w.k3);
    for i in 0..x.len() {
        w.tmp[i] = x[i] + h * w.k3[i];
    }
    rhs(t_end, node + 2, &w.tmp, &mut w.k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

/// Advances `x` by one classical RK4 step of size `h`.
pub fn rk4_step<F>(mut rhs: F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(IntegrationError::InvalidSettings(
            "step size must be positive",
        ));
    }
    let mut out = x.to_vec();
    let mut work = Rk4Work::new(x.len());
    let mut wrapped = |t: f64, _: usize, y: &[f64], dy: &mut [f64]| rhs(t, y, dy);
    rk4_step_in_place(&mut wrapped, t, 0, &mut out, h, &mut work);
    if !all_finite(&out) {
        return Err(IntegrationError::NonFinite { t: t + h });
    }
    Ok(out)
}

/// Time of half-step node `node` when `[t0, t1]` is split into `substeps`
/// equal RK4 steps. Node `2i` starts step `i`, node `2i + 1` is its midpoint.
pub fn rk4_node_time(t0: f64, t1: f64, substeps: usize, node: usize) -> f64 {
    let h = (t1 - t0) / substeps as f64;
    let step = node / 2;
    let t = t0 + step as f64 * h;
    if node % 2 == 1 {
        t + 0.5 * h
    } else {
        t
    }
}

/// Fixed-step RK4 across `[t0, t1]` where the right-hand side also receives
/// the half-step node index of each stage evaluation (see [`rk4_node_time`]).
/// Callers can tabulate time-dependent inputs once per node and share them
/// across many integrations.
pub fn integrate_fixed_nodes<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    x: &mut [f64],
    substeps: usize,
) -> Result<(), IntegrationError>
where
    F: FnMut(f64, usize, &[f64], &mut [f64]),
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(IntegrationError::InvalidInterval { t0, t1 });
    }
    if substeps == 0 {
        return Err(IntegrationError::InvalidSettings(
            "substeps_per_interval must be at least 1",
        ));
    }
    let h = (t1 - t0) / substeps as f64;
    let mut work = Rk4Work::new(x.len());
    for step in 0..substeps {
        let t = t0 + step as f64 * h;
        rk4_step_in_place(&mut rhs, t, 2 * step, x, h, &mut work);
        if !all_finite(x) {
            return Err(IntegrationError::NonFinite { t: t + h });
        }
    }
    Ok(())
}

/// Fixed-step RK4 across `[t0, t1]` using `settings.substeps_per_interval`
/// equal steps.
pub fn integrate_fixed<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    x0: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<f64>, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut x = x0.to_vec();
    integrate_fixed_nodes(
        |t, _, y, dy| rhs(t, y, dy),
        t0,
        t1,
        &mut x,
        settings.substeps_per_interval,
    )?;
    Ok(x)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 1_000_000;

/// One accepted step of the adaptive solver with its interpolation data.
#[derive(Debug, Clone)]
struct Segment {
    t: f64,
    h: f64,
    // Five coefficient blocks of length `dim`, laid out consecutively.
    cont: Vec<f64>,
}

/// Continuous solution produced by [`integrate_adaptive`].
#[derive(Debug, Clone)]
pub struct DenseOutput {
    dim: usize,
    t0: f64,
    t1: f64,
    x0: Vec<f64>,
    segments: Vec<Segment>,
}

impl DenseOutput {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t1
    }

    /// Number of accepted steps.
    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// State at the end of the integration interval.
    pub fn final_state(&self) -> Vec<f64> {
        match self.segments.last() {
            Some(seg) => {
                let d = self.dim;
                (0..d).map(|i| seg.cont[i] + seg.cont[d + i]).collect()
            }
            None => self.x0.clone(),
        }
    }

    /// Interpolated state at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        let span = self.t1 - self.t0;
        let slack = 1e-12 * span.abs().max(1.0);
        if !(t >= self.t0 - slack && t <= self.t1 + slack) {
            return Err(IntegrationError::OutOfRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        if self.segments.is_empty() {
            return Ok(self.x0.clone());
        }
        // First segment whose end lies at or beyond t.
        let idx = self
            .segments
            .partition_point(|s| s.t + s.h < t)
            .min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        let s = ((t - seg.t) / seg.h).clamp(0.0, 1.0);
        let s1 = 1.0 - s;
        let d = self.dim;
        let c = &seg.cont;
        Ok((0..d)
            .map(|i| {
                c[i] + s * (c[d + i] + s1 * (c[2 * d + i] + s * (c[3 * d + i] + s1 * c[4 * d + i])))
            })
            .collect())
    }
}

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], settings: &IntegratorSettings) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = settings.abs_tol + settings.rel_tol * a.abs().max(b.abs());
            let r = e / sc;
            r * r
        })
        .sum();
    libm::sqrt(sum / n)
}

fn rms_scaled(v: &[f64], y: &[f64], settings: &IntegratorSettings) -> f64 {
    let n = v.len().max(1) as f64;
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = a / (settings.abs_tol + settings.rel_tol * b.abs());
            r * r
        })
        .sum();
    libm::sqrt(sum / n)
}

/// Adaptive Dormand–Prince 5(4) integration of `[t0, t1]` with error control
/// `abs_tol + rel_tol * |x|` per component and dense output.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    x0: &[f64],
    settings: &IntegratorSettings,
) -> Result<DenseOutput, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(IntegrationError::InvalidInterval { t0, t1 });
    }
    settings.validate()?;
    if !all_finite(x0) {
        return Err(IntegrationError::NonFinite { t: t0 });
    }

    let dim = x0.len();
    let span = t1 - t0;
    let h_min = 1e-12 * span;
    let mut out = DenseOutput {
        dim,
        t0,
        t1,
        x0: x0.to_vec(),
        segments: Vec::new(),
    };
    if dim == 0 {
        return Ok(out);
    }

    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    rhs(t0, &y, &mut k1);

    // Initial step guess from the local scale of the solution and its slope.
    let mut h = {
        let d0 = rms_scaled(&y, &y, settings);
        let d1 = rms_scaled(&k1, &y, settings);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span);
        for i in 0..dim {
            tmp[i] = y[i] + h0 * k1[i];
        }
        rhs(t0 + h0, &tmp, &mut k2);
        let diff: Vec<f64> = k2.iter().zip(&k1).map(|(a, b)| a - b).collect();
        let d2 = rms_scaled(&diff, &y, settings) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            libm::pow(0.01 / d1.max(d2), 1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(span)
    };

    let mut t = t0;
    let mut steps = 0usize;
    let mut last_rejected = false;
    while t < t1 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(IntegrationError::TooManySteps(MAX_STEPS));
        }
        if h < h_min {
            return Err(IntegrationError::StepSizeUnderflow { t, h });
        }
        let remaining = t1 - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }

        for i in 0..dim {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &tmp, &mut k4);
        for i in 0..dim {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &tmp, &mut k5);
        for i in 0..dim {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        rhs(t_new, &tmp, &mut k6);
        for i in 0..dim {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &y_new, &mut k7);
        for i in 0..dim {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }

        if !all_finite(&y_new) || !all_finite(&k7) {
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let e = error_norm(&err, &y, &y_new, settings);
        if e <= 1.0 {
            let mut cont = vec![0.0; 5 * dim];
            for i in 0..dim {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[i] = y[i];
                cont[dim + i] = ydiff;
                cont[2 * dim + i] = bspl;
                cont[3 * dim + i] = ydiff - h * k7[i] - bspl;
                cont[4 * dim + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            out.segments.push(Segment { t, h, cont });

            t = t_new;
            core::mem::swap(&mut y, &mut y_new);
            core::mem::swap(&mut k1, &mut k7);

            let mut fac = if e == 0.0 {
                10.0
            } else {
                0.9 * libm::pow(e, -0.2)
            };
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            let fac = (0.9 * libm::pow(e, -0.2)).clamp(0.2, 1.0);
            h *= fac;
            last_rejected = true;
        }
    }
    Ok(out)
}
