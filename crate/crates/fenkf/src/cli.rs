//! Command-line interface: argument definitions and command execution.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fenkf_core::{
    generate_series, predict_dynamics, rmse, run_mass_spring_filter, ExperimentPreset,
    ExperimentReport, ForcingSpec, SeedReport,
};
use thiserror::Error;

use crate::config::{parse_config, parse_preset, parse_seeds, ConfigError, Observe, RunSettings};
use crate::manifest::{create_parent, RunManifest};
use crate::report::{write_estimates, write_report, write_states, write_summary, write_theta};
use crate::runner::{reproduce, Layout, RunError};
use crate::series_io::{load_series, save_series};

/// Exit status 2: bad usage, configuration or input files.
/// Exit status 1: failures while computing or writing results.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_failed(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "fenkf",
    version,
    about = "Estimate time-varying forcing of a mass-spring system with an ensemble Kalman filter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the system and write a noisy observation series.
    Generate(GenerateArgs),
    /// Run the filter on an observation file.
    Filter(FilterArgs),
    /// Predict states from fitted coefficients.
    Predict(PredictArgs),
    /// Run a bundled experiment (or `all`) over several seeds.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key = value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment preset providing the defaults.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "fenkf-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output file; defaults to data.csv inside the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// position, velocity or both.
    #[arg(long)]
    pub observe: Option<String>,
    /// sine, linear, cubic or zero.
    #[arg(long)]
    pub truth_forcing: Option<String>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    /// Fourier model preset: two-term, low, high, mixed or lower.
    #[arg(long)]
    pub model: Option<String>,
    /// position, velocity or both; must match the data columns.
    #[arg(long)]
    pub observe: Option<String>,
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Forcing the RMSE is measured against: sine, linear, cubic or zero.
    #[arg(long)]
    pub truth_forcing: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated coefficients c1,...,cK.
    #[arg(
        long,
        conflicts_with = "report",
        required_unless_present = "report",
        allow_hyphen_values = true
    )]
    pub coeffs: Option<String>,
    /// Report file to read coefficients from (the `--seed` row, or the first).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub truth_forcing: Option<String>,
    /// Output file; defaults to states.csv inside the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Experiment preset name, or `all`.
    pub name: String,
    /// `n`, `a..b` (inclusive) or `a,b,c`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "fenkf-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub ensemble: Option<usize>,
}

/// Resolves settings: preset defaults, then the config file, then flags.
fn resolve(
    preset: Option<&str>,
    config: Option<&Path>,
    flags: &[(&str, Option<String>)],
) -> Result<RunSettings, CliError> {
    let file_pairs = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => Vec::new(),
    };
    let base = match preset {
        Some(p) => p.to_string(),
        None => file_pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or_else(
                || ExperimentPreset::S31Full.name().to_string(),
                |(_, v)| v.clone(),
            ),
    };
    let mut settings = RunSettings::from_preset(parse_preset(&base)?);
    settings.apply_all(
        file_pairs
            .iter()
            .filter(|(k, _)| k != "preset")
            .map(|(k, v)| (k.as_str(), v.as_str())),
    )?;
    for (k, v) in flags {
        if let Some(v) = v {
            settings.apply(k, v)?;
        }
    }
    Ok(settings)
}

fn common_flags(c: &Common) -> Vec<(&'static str, Option<String>)> {
    vec![("seed", c.seed.map(|s| s.to_string()))]
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    out.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    create_parent(path).map_err(write_failed(path))?;
    Ok(BufWriter::new(
        fs::File::create(path).map_err(write_failed(path))?,
    ))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Filter(a) => filter(a),
        Command::Predict(a) => predict(a),
        Command::Reproduce(a) => reproduce_cmd(a),
    }
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut flags = common_flags(&a.common);
    flags.push(("noise_std", a.noise_std.map(|v| v.to_string())));
    flags.push(("observe", a.observe.clone()));
    flags.push(("truth_forcing", a.truth_forcing.clone()));
    let settings = resolve(
        a.common.preset.as_deref(),
        a.common.config.as_deref(),
        &flags,
    )?;
    let config = settings.experiment()?;
    let out = a.out.unwrap_or_else(|| a.common.out_dir.join("data.csv"));

    let mut manifest = RunManifest::new("generate", &settings);
    manifest.artifacts.push(out.clone());
    let mpath = sibling_manifest(&out);
    manifest.save(&mpath).map_err(write_failed(&mpath))?;

    let series =
        generate_series(&config.truth, &config.mask, &config.integrator).map_err(runtime)?;
    save_series(&out, &series).map_err(write_failed(&out))?;
    Ok(())
}

fn filter(a: FilterArgs) -> Result<(), CliError> {
    let data =
        load_series(&a.data).map_err(|e| CliError::Usage(format!("{}: {e}", a.data.display())))?;
    let data_observe = Observe::from_mask(data.mask())
        .ok_or_else(|| CliError::Usage("data must observe position and/or velocity".into()))?;
    if let Some(requested) = &a.observe {
        let requested: Observe = requested.parse().map_err(|e| {
            CliError::Usage(format!("invalid value `{requested}` for `observe`: {e}"))
        })?;
        if requested != data_observe {
            return Err(CliError::Usage(format!(
                "dimension mismatch: --observe {requested} expects {} observed column(s) but {} has `{data_observe}` ({} column(s))",
                requested.mask().observed_count(),
                a.data.display(),
                data.observed_count(),
            )));
        }
    }
    let mut flags = common_flags(&a.common);
    flags.push(("model", a.model.clone()));
    flags.push(("observe", Some(data_observe.to_string())));
    flags.push(("ensemble_size", a.ensemble.map(|n| n.to_string())));
    flags.push(("truth_forcing", a.truth_forcing.clone()));
    let settings = resolve(
        a.common.preset.as_deref(),
        a.common.config.as_deref(),
        &flags,
    )?;
    let config = settings.experiment()?;

    let layout = Layout::new(&a.common.out_dir);
    let (report_path, estimates_path, theta_path) = (
        layout.report(),
        layout.root().join("estimates.csv"),
        layout.root().join("theta.csv"),
    );
    let mut manifest = RunManifest::new("filter", &settings);
    manifest.set("data", a.data.display().to_string());
    manifest.artifacts = vec![
        report_path.clone(),
        estimates_path.clone(),
        theta_path.clone(),
        layout.summary(),
    ];
    let mpath = layout.manifest();
    manifest.save(&mpath).map_err(write_failed(&mpath))?;

    let result = run_mass_spring_filter(
        &config.filter,
        &config.model,
        &config.truth.params,
        &data,
        &config.integrator,
    )
    .map_err(runtime)?;
    let estimate =
        fenkf_core::approximation_from_result(&result, &config.model).map_err(runtime)?;
    let times = data.times();
    let theta_true: Vec<f64> = times
        .iter()
        .map(|&t| config.truth.forcing.eval(t))
        .collect();
    let theta_est: Vec<f64> = times.iter().map(|&t| estimate.eval(t)).collect();
    let row = SeedReport {
        seed: config.filter.seed,
        coefficients: result.coefficient_estimates_at(result.last()),
        rmse_theta: rmse(&theta_est, &theta_true).map_err(runtime)?,
        rmse_position: None,
        rmse_velocity: None,
    };
    let report = ExperimentReport::from_rows("filter", vec![row]).map_err(runtime)?;

    write_report(create(&report_path)?, &report).map_err(write_failed(&report_path))?;
    write_estimates(create(&estimates_path)?, &result).map_err(write_failed(&estimates_path))?;
    write_theta(create(&theta_path)?, times, &theta_true, &theta_est)
        .map_err(write_failed(&theta_path))?;
    let spath = layout.summary();
    write_summary(create(&spath)?, &report).map_err(write_failed(&spath))?;
    write_summary(io::stdout().lock(), &report).map_err(runtime)?;
    Ok(())
}

/// Reads the coefficient columns `c1..cK` of one report row.
fn coefficients_from_report(path: &Path, seed: Option<u64>) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty report".into()))?
        .split(',')
        .collect();
    if head.first() != Some(&"seed") {
        return Err(bad("first column must be `seed`".into()));
    }
    let cols: Vec<usize> = head
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            h.strip_prefix('c')
                .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        })
        .map(|(i, _)| i)
        .collect();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != head.len() {
            return Err(bad(format!(
                "row `{line}` has {} fields, header has {}",
                fields.len(),
                head.len()
            )));
        }
        if seed.is_some_and(|s| fields[0].trim() != s.to_string()) {
            continue;
        }
        return cols
            .iter()
            .map(|&i| {
                fields[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{}` is not a number", fields[i])))
            })
            .collect();
    }
    Err(bad(match seed {
        Some(s) => format!("no row for seed {s}"),
        None => "no data rows".into(),
    }))
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let mut flags = common_flags(&a.common);
    flags.push(("model", a.model.clone()));
    flags.push(("truth_forcing", a.truth_forcing.clone()));
    let settings = resolve(
        a.common.preset.as_deref(),
        a.common.config.as_deref(),
        &flags,
    )?;
    let config = settings.experiment()?;
    let coeffs = match (&a.coeffs, &a.report) {
        (Some(text), _) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("`{s}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(path)) => coefficients_from_report(path, a.common.seed)?,
        (None, None) => return Err(CliError::Usage("pass --coeffs or --report".into())),
    };
    let estimate = ForcingSpec::fourier_estimate(config.model.clone(), coeffs).map_err(|e| {
        CliError::Usage(format!(
            "coefficients do not fit model `{}`: {e}",
            settings.model
        ))
    })?;

    let out = a.out.unwrap_or_else(|| a.common.out_dir.join("states.csv"));
    let mut manifest = RunManifest::new("predict", &settings);
    if let Some(r) = &a.report {
        manifest.set("report", r.display().to_string());
    }
    manifest.artifacts.push(out.clone());
    let mpath = sibling_manifest(&out);
    manifest.save(&mpath).map_err(write_failed(&mpath))?;

    let truth = fenkf_core::generate_truth(&config.truth, &config.integrator).map_err(runtime)?;
    let predicted =
        predict_dynamics(&estimate, &config.truth, &config.integrator).map_err(runtime)?;
    write_states(create(&out)?, &truth.times, &truth.states, &predicted)
        .map_err(write_failed(&out))?;

    let pair = |f: fn(&fenkf_core::StateVector) -> f64| -> Result<f64, CliError> {
        let a: Vec<f64> = predicted.iter().map(f).collect();
        let b: Vec<f64> = truth.states.iter().map(f).collect();
        rmse(&a, &b).map_err(runtime)
    };
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "rmse_position: {}",
        crate::format::fixed4(pair(|x| x.p)?)
    )
    .map_err(runtime)?;
    writeln!(
        stdout,
        "rmse_velocity: {}",
        crate::format::fixed4(pair(|x| x.v)?)
    )
    .map_err(runtime)?;
    Ok(())
}

fn reproduce_cmd(a: ReproduceArgs) -> Result<(), CliError> {
    let presets: Vec<ExperimentPreset> = if a.name == "all" {
        ExperimentPreset::ALL.to_vec()
    } else {
        vec![parse_preset(&a.name)?]
    };
    if let Some(s) = &a.seeds {
        parse_seeds(s)?;
    }
    let mut stdout = io::stdout().lock();
    for preset in presets {
        let flags = [
            ("seeds", a.seeds.clone()),
            ("ensemble_size", a.ensemble.map(|n| n.to_string())),
        ];
        let settings = resolve(Some(preset.name()), a.config.as_deref(), &flags)?;
        let config = settings.experiment()?;
        let layout = Layout::new(a.out_dir.join(preset.name()));
        let report = reproduce(&config, RunManifest::new("reproduce", &settings), &layout)?;
        write_summary(&mut stdout, &report).map_err(runtime)?;
        writeln!(stdout).map_err(runtime)?;
    }
    Ok(())
}
