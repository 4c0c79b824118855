//! Seed-parallel experiment execution and its on-disk layout.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use fenkf_core::{run_seed, ExperimentConfig, ExperimentError, ExperimentReport, SeedOutcome};
use rayon::prelude::*;
use thiserror::Error;

use crate::manifest::{create_parent, RunManifest};
use crate::report::{write_estimates, write_report, write_states, write_summary, write_theta};
use crate::series_io::save_series;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

/// Runs every seed, in parallel when threads are available. Outcomes come
/// back in seed-list order regardless of scheduling.
pub fn run_seeds(config: &ExperimentConfig) -> Result<Vec<SeedOutcome>, ExperimentError> {
    if config.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    config
        .seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect()
}

/// [`fenkf_core::run_experiment`] with seeds run in parallel.
pub fn run_experiment_parallel(
    config: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let rows = run_seeds(config)?.iter().map(SeedOutcome::report).collect();
    ExperimentReport::from_rows(&config.name, rows)
}

/// File locations of one reproduced experiment under `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}"))
    }

    pub fn data(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("data.csv")
    }

    pub fn estimates(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("estimates.csv")
    }

    pub fn theta(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("theta.csv")
    }

    pub fn states(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("states.csv")
    }

    /// Every file a run of `config` produces, manifest excluded.
    pub fn artifacts(&self, config: &ExperimentConfig) -> Vec<PathBuf> {
        let mut out = vec![self.report(), self.summary()];
        for &s in &config.seeds {
            out.extend([self.data(s), self.estimates(s), self.theta(s)]);
            if config.predict_states {
                out.push(self.states(s));
            }
        }
        out
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    let io_err = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    create_parent(path).map_err(io_err)?;
    Ok(BufWriter::new(File::create(path).map_err(io_err)?))
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the manifest, runs every seed and writes the report, summary and
/// per-seed data, estimate and plot files.
pub fn reproduce(
    config: &ExperimentConfig,
    mut manifest: RunManifest,
    layout: &Layout,
) -> Result<ExperimentReport, RunError> {
    manifest.artifacts = layout.artifacts(config);
    let mpath = layout.manifest();
    manifest.save(&mpath).map_err(io_at(&mpath))?;

    let outcomes = run_seeds(config)?;
    for o in &outcomes {
        let path = layout.data(o.seed);
        create_parent(&path).map_err(io_at(&path))?;
        save_series(&path, &o.series).map_err(io_at(&path))?;
        let path = layout.estimates(o.seed);
        write_estimates(create(&path)?, &o.result).map_err(io_at(&path))?;
        let path = layout.theta(o.seed);
        write_theta(
            create(&path)?,
            o.series.times(),
            &o.theta_true,
            &o.theta_est,
        )
        .map_err(io_at(&path))?;
        if let (Some(pred), Some(truth)) = (&o.prediction, o.series.truth()) {
            let path = layout.states(o.seed);
            write_states(create(&path)?, o.series.times(), truth, &pred.states)
                .map_err(io_at(&path))?;
        }
    }
    let rows = outcomes.iter().map(SeedOutcome::report).collect();
    let report = ExperimentReport::from_rows(&config.name, rows)?;
    let path = layout.report();
    write_report(create(&path)?, &report).map_err(io_at(&path))?;
    let path = layout.summary();
    write_summary(create(&path)?, &report).map_err(io_at(&path))?;
    Ok(report)
}
