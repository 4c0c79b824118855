//! Run manifests, written before any computation starts so that a crashed
//! run still records what it was asked to do.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::config::RunSettings;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Resolved settings with every default filled in.
    pub settings: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &RunSettings) -> Self {
        Self {
            command: command.to_string(),
            settings: settings
                .entries()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            artifacts: Vec::new(),
        }
    }

    /// Adds or replaces a setting.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.settings.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.settings.push((key.to_string(), value)),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "version = {VERSION}")?;
        writeln!(w, "command = {}", self.command)?;
        for (k, v) in &self.settings {
            writeln!(w, "{k} = {v}")?;
        }
        for a in &self.artifacts {
            writeln!(w, "artifact = {}", a.display())?;
        }
        w.flush()
    }

    /// Writes the manifest, creating parent directories as needed. Artifact
    /// paths inside the manifest's directory are recorded relative to it, so
    /// identical runs into different directories give identical manifests.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        create_parent(path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let relative = Self {
            artifacts: self
                .artifacts
                .iter()
                .map(|a| {
                    a.strip_prefix(dir)
                        .map_or_else(|_| a.clone(), Path::to_path_buf)
                })
                .collect(),
            ..self.clone()
        };
        relative.write_to(io::BufWriter::new(fs::File::create(path)?))
    }
}

pub fn create_parent(path: &Path) -> io::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fenkf_core::ExperimentPreset;

    #[test]
    fn lists_settings_and_artifacts() {
        let mut m = RunManifest::new(
            "reproduce",
            &RunSettings::from_preset(ExperimentPreset::S31Full),
        );
        m.set("data", "in.csv");
        m.set("ensemble_size", "7");
        m.artifacts.push("out/report.csv".into());
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("version = fenkf "));
        assert!(text.contains("\nensemble_size = 7\n"));
        assert!(text.contains("\ndata = in.csv\n"));
        assert!(text.ends_with("artifact = out/report.csv\n"));
        assert_eq!(text.matches("ensemble_size").count(), 1);
    }

    #[test]
    fn artifacts_are_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("run");
        let mut m = RunManifest::new(
            "reproduce",
            &RunSettings::from_preset(ExperimentPreset::S31Full),
        );
        m.artifacts = vec![root.join("seed-1/data.csv"), "/elsewhere/x.csv".into()];
        m.save(&root.join("manifest.txt")).unwrap();
        let text = fs::read_to_string(root.join("manifest.txt")).unwrap();
        assert!(text.contains("artifact = seed-1/data.csv\n"));
        assert!(text.contains("artifact = /elsewhere/x.csv\n"));
    }
}
