//! Report, summary and plot-data writers.

use std::io::{self, Write};

use fenkf_core::{ExperimentReport, FilterResult, StateVector};

use crate::format::{fixed4, g17};

fn row<W: Write>(w: &mut W, fields: impl IntoIterator<Item = String>) -> io::Result<()> {
    writeln!(w, "{}", fields.into_iter().collect::<Vec<_>>().join(","))
}

/// One row per seed: `seed,c1..cK,c1_2sd..cK_2sd,rmse_theta` plus
/// `rmse_position,rmse_velocity` when states were predicted.
pub fn write_report<W: Write>(mut w: W, report: &ExperimentReport) -> io::Result<()> {
    let k = report.coefficient_count();
    let states = report.rows.iter().all(|r| r.rmse_position.is_some());
    let mut head = vec!["seed".to_string()];
    head.extend((1..=k).map(|i| format!("c{i}")));
    head.extend((1..=k).map(|i| format!("c{i}_2sd")));
    head.push("rmse_theta".into());
    if states {
        head.extend(["rmse_position".into(), "rmse_velocity".into()]);
    }
    row(&mut w, head)?;
    for r in &report.rows {
        let mut fields = vec![r.seed.to_string()];
        fields.extend(r.coefficients.iter().map(|c| g17(c.mean)));
        fields.extend(r.coefficients.iter().map(|c| g17(c.two_std)));
        fields.push(g17(r.rmse_theta));
        if states {
            fields.extend([r.rmse_position, r.rmse_velocity].map(|v| g17(v.unwrap_or(f64::NAN))));
        }
        row(&mut w, fields)?;
    }
    w.flush()
}

/// Human-readable block with four decimals.
pub fn write_summary<W: Write>(mut w: W, report: &ExperimentReport) -> io::Result<()> {
    let agg = &report.aggregate;
    let seeds: Vec<String> = report.rows.iter().map(|r| r.seed.to_string()).collect();
    writeln!(w, "experiment: {}", report.name)?;
    writeln!(w, "seeds: {}", seeds.join(","))?;
    writeln!(w, "coefficient means across seeds:")?;
    for (i, m) in agg.coefficient_means.iter().enumerate() {
        writeln!(w, "  c{} = {}", i + 1, fixed4(*m))?;
    }
    writeln!(w, "median rmse_theta: {}", fixed4(agg.median_rmse_theta))?;
    if let (Some(p), Some(v)) = (agg.median_rmse_position, agg.median_rmse_velocity) {
        writeln!(w, "median rmse_position: {}", fixed4(p))?;
        writeln!(w, "median rmse_velocity: {}", fixed4(v))?;
    }
    w.flush()
}

/// Coefficient mean and ±2 standard deviation band at the prior time and
/// after every assimilation: `t,c1,c1_lower,c1_upper,...`.
pub fn write_estimates<W: Write>(mut w: W, result: &FilterResult) -> io::Result<()> {
    let k = result.coefficient_count();
    let mut head = vec!["t".to_string()];
    for i in 1..=k {
        head.extend([
            format!("c{i}"),
            format!("c{i}_lower"),
            format!("c{i}_upper"),
        ]);
    }
    row(&mut w, head)?;
    for rec in std::iter::once(&result.prior).chain(&result.steps) {
        let mut fields = vec![g17(rec.time)];
        for c in result.coefficient_estimates_at(rec) {
            fields.extend([c.mean, c.mean - c.two_std, c.mean + c.two_std].map(g17));
        }
        row(&mut w, fields)?;
    }
    w.flush()
}

/// `t,theta_true,theta_est`.
pub fn write_theta<W: Write>(
    mut w: W,
    times: &[f64],
    truth: &[f64],
    estimate: &[f64],
) -> io::Result<()> {
    row(&mut w, ["t", "theta_true", "theta_est"].map(String::from))?;
    for ((&t, &a), &b) in times.iter().zip(truth).zip(estimate) {
        row(&mut w, [t, a, b].map(g17))?;
    }
    w.flush()
}

/// `t,position_true,position_pred,velocity_true,velocity_pred`.
pub fn write_states<W: Write>(
    mut w: W,
    times: &[f64],
    truth: &[StateVector],
    predicted: &[StateVector],
) -> io::Result<()> {
    let head = [
        "t",
        "position_true",
        "position_pred",
        "velocity_true",
        "velocity_pred",
    ];
    row(&mut w, head.map(String::from))?;
    for ((&t, a), b) in times.iter().zip(truth).zip(predicted) {
        row(&mut w, [t, a.p, b.p, a.v, b.v].map(g17))?;
    }
    w.flush()
}
