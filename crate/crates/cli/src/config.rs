//! Experiment configuration: TOML with one table per concern. Every report
//! embeds the configuration it ran with under `[config]`, and such a report
//! is itself accepted as a configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub model: ModelSection,
    pub exponent: ExponentSection,
    pub recover: RecoverSection,
    pub agnostic: AgnosticSection,
    pub forge: ForgeSection,
    pub sweep: SweepSection,
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub seeds: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, seeds: 1, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub n: usize,
    /// Link expression, or `file:<path>` for a forged link table.
    pub link: String,
    pub noise: String,
    /// Dataset CSV to use instead of sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { d: 64, n: 4096, link: "square-gauss".into(), noise: "deterministic".into(), data: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentSection {
    pub kmax: usize,
    /// Sample size for the binned estimator on noisy channels.
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Number of label levels in the tabulated witness.
    pub levels: usize,
    pub se_multiple: f64,
}

impl Default for ExponentSection {
    fn default() -> Self {
        Self { kmax: 6, samples: 1_000_000, bins: None, levels: 41, se_multiple: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    /// Degree of the estimator; defaults to the generative exponent of a
    /// deterministic link.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Truncation constant of the denoiser radius.
    pub c: f64,
    /// Fraction of samples used to estimate the denoiser on noisy channels.
    pub holdout: f64,
    pub se_multiple: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_rounds: Option<usize>,
}

impl Default for RecoverSection {
    fn default() -> Self {
        Self { k: None, c: 3.0, holdout: 0.1, se_multiple: 3.0, power_rounds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgnosticSection {
    pub max_k: usize,
    pub degree: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<usize>,
    pub percentile: f64,
}

impl Default for AgnosticSection {
    fn default() -> Self {
        Self { max_k: 5, degree: 6, validation: None, percentile: sindex::agnostic::DEFAULT_PERCENTILE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSection {
    pub kstar: usize,
    pub tau: f64,
    pub eps: f64,
    pub steps: usize,
    pub samples_per_branch: usize,
    pub verify: bool,
}

impl Default for ForgeSection {
    fn default() -> Self {
        let p = sindex::forge::ForgeParams::default();
        Self {
            kstar: 4,
            tau: p.tau,
            eps: p.eps,
            steps: p.steps,
            samples_per_branch: p.samples_per_branch,
            verify: p.verify,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k: usize,
    pub c: f64,
    pub d: Vec<usize>,
    /// Absolute sample sizes (phase sweep).
    pub n: Vec<usize>,
    /// Sample sizes as multiples of `d^{k/2}` (phase sweep).
    pub n_mult: Vec<f64>,
    /// Absolute `δ = n / d^{k/2}` (BBP sweep).
    pub delta: Vec<f64>,
    /// `δ` as multiples of the predicted threshold (BBP sweep).
    pub delta_ratio: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k: 4,
            c: 3.0,
            d: vec![64],
            n: vec![],
            n_mult: vec![1.0, 2.0, 4.0, 8.0],
            delta: vec![],
            delta_ratio: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub kstar: usize,
    pub c_k: f64,
    pub lambda: Vec<f64>,
    pub d: Vec<f64>,
    pub delta: Vec<f64>,
    pub degree: Vec<usize>,
    pub r: Vec<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            kstar: 4,
            c_k: 1.0,
            lambda: vec![1.0],
            d: vec![1e4, 1e5, 1e6],
            delta: vec![0.125, 0.25, 0.5, 1.0],
            degree: vec![20],
            r: vec![1.0],
        }
    }
}

impl Config {
    /// Reads a configuration, or the `[config]` table of a report.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = match (table.contains_key("meta"), table.remove("config")) {
            (true, Some(inner)) => inner,
            (_, Some(inner)) => {
                table.insert("config".into(), inner);
                toml::Value::Table(table)
            }
            (_, None) => toml::Value::Table(table),
        };
        value.try_into().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.run.seeds == 0 {
            return bad("run.seeds must be at least 1");
        }
        if self.run.seed > i64::MAX as u64 {
            return bad("run.seed must fit in a signed 64-bit integer");
        }
        if !(self.recover.holdout > 0.0 && self.recover.holdout < 1.0) {
            return bad("recover.holdout must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Parses `a,b,c`, or `lo..hi` (log grid with one point per decade), or
/// `lo..hi:m` (log grid with `m` points).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("bad grid `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let values = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, count) = match rest.split_once(':') {
            Some((hi, m)) => (num(hi)?, Some(m.trim().parse::<usize>().map_err(|_| bad())?)),
            None => (num(rest)?, None),
        };
        let lo = num(lo)?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let m = count.unwrap_or_else(|| (hi / lo).log10().round() as usize + 1);
        if m == 0 {
            return Err(bad());
        }
        if m == 1 {
            vec![lo]
        } else {
            let step = (hi / lo).ln() / (m - 1) as f64;
            (0..m)
                .map(|i| if i + 1 == m { hi } else { lo * (step * i as f64).exp() })
                .map(|v| if (v - v.round()).abs() < 1e-9 * v.abs().max(1.0) { v.round() } else { v })
                .collect()
        }
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn as_counts(key: &str, values: Vec<f64>) -> Result<Vec<usize>, CliError> {
    values
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!("grid `{key}` needs nonnegative integers, got {v}")))
            }
        })
        .collect()
}

/// Applies `key=spec` overrides to the sweep grids.
pub fn apply_sweep_grid(s: &mut SweepSection, assignment: &str) -> Result<(), CliError> {
    let (key, spec) = split_assignment(assignment)?;
    let values = parse_grid(spec)?;
    match key.as_str() {
        "d" => s.d = as_counts(&key, values)?,
        "n" => s.n = as_counts(&key, values)?,
        "n_mult" => s.n_mult = values,
        "delta" => s.delta = values,
        "delta_ratio" => s.delta_ratio = values,
        _ => return Err(CliError::Config(format!("unknown sweep grid `{key}`"))),
    }
    Ok(())
}

/// Applies `key=spec` overrides to the bounds grids.
pub fn apply_bounds_grid(b: &mut BoundsSection, assignment: &str) -> Result<(), CliError> {
    let (key, spec) = split_assignment(assignment)?;
    let values = parse_grid(spec)?;
    match key.as_str() {
        "d" => b.d = values,
        "delta" => b.delta = values,
        "lambda" => b.lambda = values,
        "r" => b.r = values,
        "degree" => b.degree = as_counts(&key, values)?,
        _ => return Err(CliError::Config(format!("unknown bounds grid `{key}`"))),
    }
    Ok(())
}

fn split_assignment(a: &str) -> Result<(String, &str), CliError> {
    let (k, v) = a.split_once('=').ok_or_else(|| CliError::Config(format!("grid `{a}` is not key=values")))?;
    Ok((k.trim().replace('-', "_"), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1e4..1e6").unwrap(), vec![1e4, 1e5, 1e6]);
        assert_eq!(parse_grid("1,2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid("1..16:5").unwrap(), vec![1.0, 2.0, 4.0, 8.0, 16.0]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("5..1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = Config::default();
        c.recover.k = Some(4);
        c.model.data = Some("x.csv".into());
        let text = toml::to_string(&c).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[model]\ndims = 3\n").is_err());
    }
}
