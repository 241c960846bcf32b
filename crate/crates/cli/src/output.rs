//! Report and table writers, plus the order statistics used by sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub library_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub seeds: usize,
    pub threads: usize,
    /// Artifact files written next to the report.
    pub artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    meta: &'a Meta,
    config: &'a Config,
    result: &'a R,
}

/// Output directory for one run.
pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    /// Path of an artifact, recorded in the report.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.root.join(name)
    }

    /// Writes rows under a header derived from their field names.
    pub fn write_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_path(self.artifact(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.toml` and returns its path.
    pub fn write_report<R: Serialize>(
        self,
        command: &str,
        config: &Config,
        threads: usize,
        result: &R,
    ) -> Result<PathBuf, CliError> {
        let meta = Meta {
            tool: "sindex",
            version: env!("CARGO_PKG_VERSION"),
            library_version: sindex::VERSION,
            command: command.into(),
            seed: config.run.seed,
            seeds: config.run.seeds,
            threads,
            artifacts: self.artifacts,
        };
        let text = toml::to_string(&Report { meta: &meta, config, result })?;
        let path = self.root.join("report.toml");
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Linear-interpolation quantile of a sample; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.25), Some(1.0));
        assert_eq!(median(&[]), None);
    }
}
