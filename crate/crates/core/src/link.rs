//! Link functions `σ` with `Y = σ(Z)` before the noise channel.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::LinkTable;
use crate::hermite::{eval_hermite, hermite_table, HermiteKind};

/// Scalar post-processing applied to a link's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelTransform {
    Cube,
    Tanh,
    Square,
}

impl LabelTransform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            LabelTransform::Cube => y * y * y,
            LabelTransform::Tanh => y.tanh(),
            LabelTransform::Square => y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelTransform::Cube => "cube",
            LabelTransform::Tanh => "tanh",
            LabelTransform::Square => "square",
        }
    }

    pub fn derivative(self, y: f64) -> f64 {
        match self {
            LabelTransform::Cube => 3.0 * y * y,
            LabelTransform::Tanh => 1.0 - y.tanh().powi(2),
            LabelTransform::Square => 2.0 * y,
        }
    }
}

#[derive(Debug, Clone)]
pub enum LinkFunction {
    Identity,
    /// Normalized Hermite polynomial `h_j`.
    Hermite(usize),
    /// `z² e^{−z²}`.
    SquareGauss,
    /// `cos(2π γ z)`.
    Cosine {
        gamma: f64,
    },
    /// `Σ_j c_j h_j(z)`, starting at degree 0.
    HermiteSeries(Vec<f64>),
    /// Output of the link forge.
    Tabulated(Arc<LinkTable>),
    /// `t(σ(z))`.
    Composed {
        inner: Box<LinkFunction>,
        outer: LabelTransform,
    },
}

/// Maximal intervals where the link is constant, grouped by value.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatSet {
    pub level: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl LinkFunction {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            LinkFunction::Identity => z,
            LinkFunction::Hermite(j) => eval_hermite(HermiteKind::Normalized, *j, z),
            LinkFunction::SquareGauss => z * z * (-z * z).exp(),
            LinkFunction::Cosine { gamma } => (2.0 * PI * gamma * z).cos(),
            LinkFunction::HermiteSeries(c) => {
                if c.is_empty() {
                    return 0.0;
                }
                let h = hermite_table(HermiteKind::Normalized, c.len() - 1, z);
                c.iter().zip(&h).map(|(a, b)| a * b).sum()
            }
            LinkFunction::Tabulated(t) => t.eval(z),
            LinkFunction::Composed { inner, outer } => outer.apply(inner.eval(z)),
        }
    }

    /// `σ'(z)` in closed form.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Hermite(j) => {
                if *j == 0 {
                    0.0
                } else {
                    (*j as f64).sqrt() * eval_hermite(HermiteKind::Normalized, j - 1, z)
                }
            }
            LinkFunction::SquareGauss => 2.0 * z * (1.0 - z * z) * (-z * z).exp(),
            LinkFunction::Cosine { gamma } => -2.0 * PI * gamma * (2.0 * PI * gamma * z).sin(),
            LinkFunction::HermiteSeries(c) => {
                if c.len() < 2 {
                    return 0.0;
                }
                let h = hermite_table(HermiteKind::Normalized, c.len() - 2, z);
                c.iter().skip(1).enumerate().map(|(i, a)| a * ((i + 1) as f64).sqrt() * h[i]).sum()
            }
            LinkFunction::Tabulated(t) => t.derivative(z),
            LinkFunction::Composed { inner, outer } => outer.derivative(inner.eval(z)) * inner.derivative(z),
        }
    }

    /// True when `σ` is constant on the whole line.
    pub fn is_constant(&self) -> bool {
        match self {
            LinkFunction::Hermite(0) => true,
            LinkFunction::Cosine { gamma } => *gamma == 0.0,
            LinkFunction::HermiteSeries(c) => c.iter().skip(1).all(|&a| a == 0.0),
            LinkFunction::Composed { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    /// Regions of positive Gaussian mass on which `σ` is constant.
    pub fn flat_sets(&self) -> Vec<FlatSet> {
        if self.is_constant() {
            return vec![FlatSet { level: self.eval(0.0), intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)] }];
        }
        match self {
            LinkFunction::Tabulated(t) => vec![FlatSet { level: t.plateau_level(), intervals: t.plateau_intervals() }],
            LinkFunction::Composed { inner, outer } => inner
                .flat_sets()
                .into_iter()
                .map(|f| FlatSet { level: outer.apply(f.level), intervals: f.intervals })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Points where the level-set structure is known to change (branch
    /// centres and ends of tabulated links). Critical points of smooth links
    /// are located numerically by the caller.
    pub fn structural_points(&self) -> Vec<f64> {
        match self {
            LinkFunction::Tabulated(t) => t.structural_points(),
            LinkFunction::Composed { inner, .. } => inner.structural_points(),
            _ => Vec::new(),
        }
    }

    /// Short tag used in reports and digests.
    pub fn describe(&self) -> String {
        match self {
            LinkFunction::Identity => "identity".into(),
            LinkFunction::Hermite(j) => format!("hermite({j})"),
            LinkFunction::SquareGauss => "square-gauss".into(),
            LinkFunction::Cosine { gamma } => format!("cosine({gamma})"),
            LinkFunction::HermiteSeries(c) => {
                format!("hermite-series[{}]", c.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","))
            }
            LinkFunction::Tabulated(t) => format!("tabulated({})", t.describe()),
            LinkFunction::Composed { inner, outer } => {
                format!("{}({})", outer.name(), inner.describe())
            }
        }
    }

    /// Parses `identity`, `hermite(3)`, `square-gauss`, `cosine(0.5)`,
    /// `hermite-series[0,0,1]`, optionally wrapped in `cube(..)`, `tanh(..)`
    /// or `square(..)`. Tabulated links are loaded from files instead.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("unknown link `{s}`"));
        let inner_of = |prefix: &str, open: char, close: char| -> Option<&str> {
            s.strip_prefix(prefix).and_then(|r| r.strip_prefix(open)).and_then(|r| r.strip_suffix(close))
        };
        for (name, t) in
            [("cube", LabelTransform::Cube), ("tanh", LabelTransform::Tanh), ("square", LabelTransform::Square)]
        {
            if let Some(inner) = inner_of(name, '(', ')') {
                return Ok(LinkFunction::Composed { inner: Box::new(Self::parse(inner)?), outer: t });
            }
        }
        match s {
            "identity" => return Ok(LinkFunction::Identity),
            "square-gauss" => return Ok(LinkFunction::SquareGauss),
            _ => {}
        }
        if let Some(j) = inner_of("hermite", '(', ')') {
            return j.trim().parse().map(LinkFunction::Hermite).map_err(|_| bad());
        }
        if let Some(g) = inner_of("cosine", '(', ')') {
            return g.trim().parse().map(|gamma| LinkFunction::Cosine { gamma }).map_err(|_| bad());
        }
        if let Some(list) = inner_of("hermite-series", '[', ']') {
            let coefs: std::result::Result<Vec<f64>, _> = list.split(',').map(|v| v.trim().parse::<f64>()).collect();
            return coefs.map(LinkFunction::HermiteSeries).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// Free-function form of [`LinkFunction::eval`].
pub fn eval_link(link: &LinkFunction, z: f64) -> f64 {
    link.eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        assert_relative_eq!(eval_link(&LinkFunction::SquareGauss, 1.0), (-1.0f64).exp());
        assert_relative_eq!(eval_link(&LinkFunction::Hermite(3), 2.0), 2.0 / 6f64.sqrt(), epsilon = 1e-15);
        let series = LinkFunction::HermiteSeries(vec![0.0, 0.0, 1.0]);
        for z in [-2.0, 0.3, 1.7] {
            assert_relative_eq!(series.eval(z), (z * z - 1.0) / 2f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let links = [
            LinkFunction::Identity,
            LinkFunction::Hermite(4),
            LinkFunction::SquareGauss,
            LinkFunction::Cosine { gamma: 0.7 },
            LinkFunction::HermiteSeries(vec![0.2, -0.5, 0.0, 0.8]),
            LinkFunction::Composed { inner: Box::new(LinkFunction::Hermite(3)), outer: LabelTransform::Tanh },
        ];
        let h = 1e-6;
        for link in &links {
            for z in [-1.3, -0.2, 0.4, 2.1] {
                let fd = (link.eval(z + h) - link.eval(z - h)) / (2.0 * h);
                assert!((fd - link.derivative(z)).abs() < 1e-7, "{} at {z}", link.describe());
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for s in ["identity", "hermite(3)", "square-gauss", "cosine(0.25)", "tanh(hermite(3))"] {
            let link = LinkFunction::parse(s).unwrap();
            assert_eq!(link.describe(), s);
        }
        assert!(LinkFunction::parse("hermite-series[0, 1, 0.5]").is_ok());
        assert!(LinkFunction::parse("sigmoid").is_err());
    }
}
