#![allow(clippy::needless_range_loop)]

use fenkf_core::dynamics::step_forced;
use fenkf_core::enkf::{analysis_update, filter_rng, predict_ensemble, sample_prior};
use fenkf_core::ode::IntegrationError;
use fenkf_core::ode::IntegratorSettings;
use fenkf_core::{
    ensemble_stats, kalman_gain, preset_model, run_filter, run_mass_spring_filter, Ensemble,
    FilterConfig, ForcedMassSpring, ForcingSpec, MassSpringParams, ObservationMask,
    ObservationSeries, Propagator, StateVector,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `x ← a·x`, no coefficients.
struct ScalarLinear {
    a: f64,
}

impl Propagator for ScalarLinear {
    type Interval = ();

    fn state_dim(&self) -> usize {
        1
    }

    fn coefficient_count(&self) -> usize {
        0
    }

    fn interval(&self, _: f64, _: f64) {}

    fn propagate(&self, _: &(), state: &mut [f64], _: &[f64]) -> Result<(), IntegrationError> {
        state[0] *= self.a;
        Ok(())
    }
}

fn random_ensemble(rng: &mut ChaCha8Rng, state_dim: usize, dim: usize, n: usize) -> Ensemble {
    let members: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    Ensemble::from_members(state_dim, &members).unwrap()
}

fn brute_covariance(ens: &Ensemble) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = ens.size();
    let d = ens.dim();
    let mut mean = vec![0.0; d];
    for k in 0..n {
        for i in 0..d {
            mean[i] += ens.member(k)[i];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..n {
                s += (ens.member(k)[i] - mean[i]) * (ens.member(k)[j] - mean[j]);
            }
            cov[i][j] = s / (n as f64 - 1.0);
        }
    }
    (mean, cov)
}

#[test]
fn gain_matches_explicit_two_by_two_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ens = random_ensemble(&mut rng, 2, 4, 5);
    let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
    let k = kalman_gain(&ens, &ObservationMask::all(2), &d).unwrap();

    let (_, g) = brute_covariance(&ens);
    let s = [
        [g[0][0] + 0.3, g[0][1] + 0.05],
        [g[1][0] + 0.05, g[1][1] + 0.2],
    ];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let inv = [
        [s[1][1] / det, -s[0][1] / det],
        [-s[1][0] / det, s[0][0] / det],
    ];
    for row in 0..4 {
        for col in 0..2 {
            let expected = g[row][0] * inv[0][col] + g[row][1] * inv[1][col];
            assert!((k[(row, col)] - expected).abs() < 1e-10);
        }
    }
}

#[test]
fn uninformative_observations_give_vanishing_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ens = random_ensemble(&mut rng, 2, 4, 50);
    let d = DMatrix::identity(2, 2) * 1e12;
    let k = kalman_gain(&ens, &ObservationMask::all(2), &d).unwrap();
    assert!(k.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn huge_observation_noise_leaves_forecast_in_place() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let members: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..4).map(|_| rng.random_range(-0.1..0.1)).collect())
        .collect();
    let ens = Ensemble::from_members(2, &members).unwrap();
    let d = DMatrix::identity(2, 2) * 1e12;
    let out = analysis_update(
        ens.clone(),
        &[0.5, -0.5],
        &ObservationMask::all(2),
        &d,
        &mut filter_rng(1),
    )
    .unwrap();
    let sup = (out.members() - ens.members()).abs().max();
    assert!(sup < 1e-6, "sup {sup}");
}

#[test]
fn prior_coefficients_are_uniform() {
    let mask = ObservationMask::all(2);
    let mut cfg = FilterConfig::mass_spring_default(&mask);
    cfg.ensemble_size = 100_000;
    let ens = sample_prior(&cfg, 2, &mut filter_rng(2)).unwrap();
    let mut sum = 0.0;
    for n in 0..ens.size() {
        for &c in ens.coefficients(n) {
            assert!((-2.0..=12.0).contains(&c));
            sum += c;
        }
    }
    let mean = sum / (2 * ens.size()) as f64;
    assert!((mean - 5.0).abs() < 0.1, "mean {mean}");
    let stats = ensemble_stats(&ens);
    assert!((stats.mean[0] - 1.0).abs() < 0.01 && (stats.mean[1] - 1.0).abs() < 0.01);
    assert!((stats.covariance[(0, 0)] - 0.25).abs() < 0.01);
}

#[test]
fn prediction_noise_has_requested_covariance() {
    let params = MassSpringParams::default();
    let settings = IntegratorSettings::default();
    let model = preset_model("two-term").unwrap();
    let prop = ForcedMassSpring::new(params, model, &settings).unwrap();
    let n = 100_000;
    let start = vec![2.0, 0.0, 0.0, 0.0];
    let ens = Ensemble::from_members(2, &vec![start; n]).unwrap();
    let c = DMatrix::identity(2, 2) * (0.02 * 0.02);
    let out = predict_ensemble(ens.clone(), &prop, 0.0, 0.5, &c, &mut filter_rng(4)).unwrap();

    let det = step_forced(
        &params,
        &ForcingSpec::zero(),
        StateVector::new(2.0, 0.0),
        0.0,
        0.5,
        &settings,
    )
    .unwrap();
    let stats = ensemble_stats(&out);
    assert!((stats.mean[0] - det.p).abs() < 1e-3);
    assert!((stats.mean[1] - det.v).abs() < 1e-3);
    let tol = 0.05 * 0.0004;
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (stats.covariance[(i, j)] - c[(i, j)]).abs() < tol,
                "({i},{j})"
            );
        }
    }
    for k in 0..n {
        assert_eq!(out.coefficients(k), ens.coefficients(k));
    }
}

#[test]
fn zero_noise_prediction_is_deterministic_integration() {
    let params = MassSpringParams::default();
    let settings = IntegratorSettings::default();
    let prop = ForcedMassSpring::new(params, preset_model("low").unwrap(), &settings).unwrap();
    let members: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let mut z = vec![1.0 + k as f64, -0.5 * k as f64];
            z.extend([0.0; 8]);
            z
        })
        .collect();
    let ens = Ensemble::from_members(2, &members).unwrap();
    let out = predict_ensemble(
        ens,
        &prop,
        1.0,
        1.5,
        &DMatrix::zeros(2, 2),
        &mut filter_rng(0),
    )
    .unwrap();
    for k in 0..3 {
        let x0 = StateVector::new(members[k][0], members[k][1]);
        let x = step_forced(&params, &ForcingSpec::zero(), x0, 1.0, 1.5, &settings).unwrap();
        assert_eq!(out.state(k), &[x.p, x.v]);
    }
}

#[test]
fn scalar_analysis_matches_kalman_update() {
    // Prior N(0, 4), y = 1, D = 1  →  posterior N(0.8, 0.8).
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let members: Vec<Vec<f64>> = (0..100_000)
        .map(|_| vec![2.0 * rng.sample::<f64, _>(rand_distr::StandardNormal)])
        .collect();
    let ens = Ensemble::from_members(1, &members).unwrap();
    let prior_var = ensemble_stats(&ens).covariance[(0, 0)];
    let d = DMatrix::from_element(1, 1, 1.0);
    let out = analysis_update(
        ens,
        &[1.0],
        &ObservationMask::all(1),
        &d,
        &mut filter_rng(8),
    )
    .unwrap();
    let s = ensemble_stats(&out);
    assert!((s.mean[0] - 0.8).abs() < 0.02 * 0.8, "mean {}", s.mean[0]);
    assert!(
        (s.covariance[(0, 0)] - 0.8).abs() < 0.02 * 0.8,
        "var {}",
        s.covariance[(0, 0)]
    );
    assert!(s.covariance[(0, 0)] < prior_var);
}

struct Kalman {
    mean: f64,
    var: f64,
}

#[test]
fn linear_gaussian_filter_tracks_exact_kalman_filter() {
    let a = 0.95;
    let (c, d) = (0.5, 1.0);
    let n_steps = 20;
    let times: Vec<f64> = (1..=n_steps).map(|j| j as f64).collect();
    let obs: Vec<f64> = (1..=n_steps)
        .map(|j| 9.0 + 0.5 * (j as f64 * 0.7).sin())
        .collect();
    let data = ObservationSeries::new(times, obs.clone(), ObservationMask::all(1), None).unwrap();
    let cfg = FilterConfig {
        ensemble_size: 50_000,
        prior_state_mean: DVector::from_element(1, 10.0),
        prior_state_cov: DMatrix::from_element(1, 1, 4.0),
        coeff_prior_low: 0.0,
        coeff_prior_high: 1.0,
        model_cov: DMatrix::from_element(1, 1, c),
        observation_cov: DMatrix::from_element(1, 1, d),
        seed: 17,
        start_time: 0.0,
    };
    let r = run_filter(&cfg, &ScalarLinear { a }, &data).unwrap();
    assert_eq!(r.steps.len(), n_steps);

    let mut kf = Kalman {
        mean: 10.0,
        var: 4.0,
    };
    for (rec, y) in r.steps.iter().zip(&obs) {
        kf.mean *= a;
        kf.var = a * a * kf.var + c;
        let gain = kf.var / (kf.var + d);
        kf.mean += gain * (y - kf.mean);
        kf.var *= 1.0 - gain;
        assert!(((rec.mean[0] - kf.mean) / kf.mean).abs() < 0.05);
        assert!(((rec.covariance[(0, 0)] - kf.var) / kf.var).abs() < 0.10);
    }
}

fn small_sine_series(seed: u64) -> ObservationSeries {
    let spec = fenkf_core::TruthSpec {
        t_end: 10.0,
        seed,
        ..Default::default()
    };
    fenkf_core::generate_series(
        &spec,
        &ObservationMask::all(2),
        &IntegratorSettings::default(),
    )
    .unwrap()
}

#[test]
fn seeded_runs_are_bit_identical() {
    let data = small_sine_series(3);
    let mut cfg = FilterConfig::mass_spring_default(data.mask());
    cfg.ensemble_size = 200;
    cfg.seed = 99;
    let model = preset_model("two-term").unwrap();
    let params = MassSpringParams::default();
    let s = IntegratorSettings::default();
    let a = run_mass_spring_filter(&cfg, &model, &params, &data, &s).unwrap();
    let b = run_mass_spring_filter(&cfg, &model, &params, &data, &s).unwrap();
    assert_eq!(a, b);
    cfg.seed = 100;
    let c = run_mass_spring_filter(&cfg, &model, &params, &data, &s).unwrap();
    assert_ne!(a.final_ensemble, c.final_ensemble);
}

#[test]
fn result_records_one_step_per_observation() {
    let data = small_sine_series(4);
    let mut cfg = FilterConfig::mass_spring_default(data.mask());
    cfg.ensemble_size = 2;
    let r = run_mass_spring_filter(
        &cfg,
        &preset_model("low").unwrap(),
        &MassSpringParams::default(),
        &data,
        &IntegratorSettings::default(),
    )
    .unwrap();
    assert_eq!(r.steps.len(), data.len());
    assert_eq!(r.final_coefficients().len(), 8);
    for rec in &r.steps {
        let eig = SymmetricEigen::new(rec.covariance.clone()).eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-10));
        assert_eq!(rec.covariance, rec.covariance.transpose());
    }
}

#[test]
fn mismatched_mask_is_rejected() {
    let data = small_sine_series(5);
    let cfg = FilterConfig::mass_spring_default(&ObservationMask::position_only());
    let r = run_mass_spring_filter(
        &cfg,
        &preset_model("two-term").unwrap(),
        &MassSpringParams::default(),
        &data,
        &IntegratorSettings::default(),
    );
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_match_double_loop(seed in any::<u64>(), n in 2usize..=100, dim in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = random_ensemble(&mut rng, 1, dim, n);
        let s = ensemble_stats(&ens);
        let (mean, cov) = brute_covariance(&ens);
        for i in 0..dim {
            prop_assert!((s.mean[i] - mean[i]).abs() < 1e-12);
            for j in 0..dim {
                prop_assert!((s.covariance[(i, j)] - cov[i][j]).abs() < 1e-12);
            }
        }
        let eig = SymmetricEigen::new(s.covariance.clone()).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn prediction_never_touches_coefficients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = random_ensemble(&mut rng, 2, 10, 8);
        let prop = ForcedMassSpring::new(
            MassSpringParams::default(),
            preset_model("low").unwrap(),
            &IntegratorSettings::default(),
        ).unwrap();
        let c = DMatrix::identity(2, 2) * 0.01;
        let out = predict_ensemble(ens.clone(), &prop, 0.0, 0.5, &c, &mut rng).unwrap();
        for k in 0..ens.size() {
            prop_assert_eq!(out.coefficients(k), ens.coefficients(k));
        }
    }
}
