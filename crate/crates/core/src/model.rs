//! Planted Gaussian single-index models and their samples.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::link::LinkFunction;
use crate::rng::{stream, Domain};
use crate::tensor::{dot, norm, CHUNK_ROWS};

fn gauss(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One-dimensional laws used by the mixture channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedLaw {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass(f64),
}

impl NamedLaw {
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match *self {
            NamedLaw::Gaussian { mean, sd } => mean + sd * gauss(rng),
            NamedLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            NamedLaw::PointMass(c) => c,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NamedLaw::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            NamedLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            NamedLaw::PointMass(c) => c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid law {}", self.describe())))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NamedLaw::Gaussian { mean, sd } => format!("gaussian({mean},{sd})"),
            NamedLaw::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            NamedLaw::PointMass(c) => format!("point-mass({c})"),
        }
    }

    /// Parses `gaussian(m,s)`, `uniform(a,b)` or `point-mass(c)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("unknown law `{s}`"));
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<f64> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let law = match (name.trim(), args.as_slice()) {
            ("gaussian", [m, sd]) => NamedLaw::Gaussian { mean: *m, sd: *sd },
            ("uniform", [a, b]) => NamedLaw::Uniform { lo: *a, hi: *b },
            ("point-mass", [c]) => NamedLaw::PointMass(*c),
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

/// Flip probability of the Massart channel as a function of `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlipRate {
    Constant(f64),
    /// `peak · exp(−z²/width²)`: noisiest near the decision boundary.
    Bump {
        peak: f64,
        width: f64,
    },
}

impl FlipRate {
    pub fn at(&self, z: f64) -> f64 {
        match *self {
            FlipRate::Constant(eta) => eta,
            FlipRate::Bump { peak, width } => peak * (-(z * z) / (width * width)).exp(),
        }
    }

    fn sup(&self) -> f64 {
        match *self {
            FlipRate::Constant(eta) => eta,
            FlipRate::Bump { peak, .. } => peak,
        }
    }
}

/// Conditional law of `Y` given `Z = w⋆·x`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseChannel {
    Deterministic,
    /// `σ(Z) + τ ξ`.
    AdditiveGaussian(f64),
    /// `σ(Z) ξ`.
    MultiplicativeGaussian,
    /// `Y ~ above` when `Z ≥ 0`, else `Y ~ below`; ignores the link.
    Mixture {
        above: NamedLaw,
        below: NamedLaw,
    },
    /// `−σ(Z)` with probability `η(Z)`, else `σ(Z)`.
    Massart(FlipRate),
}

impl NoiseChannel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseChannel::AdditiveGaussian(tau) if !(tau.is_finite() && *tau >= 0.0) => {
                Err(Error::invalid("additive noise level must be finite and >= 0"))
            }
            NoiseChannel::Massart(rate) => {
                let eta = rate.sup();
                if (0.0..0.5).contains(&eta) && !matches!(rate, FlipRate::Bump { width, .. } if *width <= 0.0) {
                    Ok(())
                } else {
                    Err(Error::invalid("Massart flip rate must lie in [0, 1/2)"))
                }
            }
            NoiseChannel::Mixture { above, below } => {
                above.validate()?;
                below.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, NoiseChannel::Deterministic) || matches!(self, NoiseChannel::AdditiveGaussian(t) if *t == 0.0)
    }

    /// Draws a label for projection `z` with link value `s = σ(z)`.
    pub fn apply(&self, z: f64, s: f64, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            NoiseChannel::Deterministic => s,
            NoiseChannel::AdditiveGaussian(tau) => s + tau * gauss(rng),
            NoiseChannel::MultiplicativeGaussian => s * gauss(rng),
            NoiseChannel::Mixture { above, below } => {
                if z >= 0.0 {
                    above.sample(rng)
                } else {
                    below.sample(rng)
                }
            }
            NoiseChannel::Massart(rate) => {
                if rng.random::<f64>() < rate.at(z) {
                    -s
                } else {
                    s
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseChannel::Deterministic => "deterministic".into(),
            NoiseChannel::AdditiveGaussian(t) => format!("additive-gaussian({t})"),
            NoiseChannel::MultiplicativeGaussian => "multiplicative-gaussian".into(),
            NoiseChannel::Mixture { above, below } => {
                format!("mixture({};{})", above.describe(), below.describe())
            }
            NoiseChannel::Massart(FlipRate::Constant(eta)) => format!("massart({eta})"),
            NoiseChannel::Massart(FlipRate::Bump { peak, width }) => {
                format!("massart-bump({peak},{width})")
            }
        }
    }

    /// Parses the forms produced by [`describe`](Self::describe).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("unknown noise channel `{s}`"));
        let args = |prefix: &str| -> Option<&str> { s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')') };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let ch = if s == "deterministic" {
            NoiseChannel::Deterministic
        } else if s == "multiplicative-gaussian" {
            NoiseChannel::MultiplicativeGaussian
        } else if let Some(a) = args("additive-gaussian") {
            NoiseChannel::AdditiveGaussian(num(a)?)
        } else if let Some(a) = args("massart-bump") {
            let (p, w) = a.split_once(',').ok_or_else(bad)?;
            NoiseChannel::Massart(FlipRate::Bump { peak: num(p)?, width: num(w)? })
        } else if let Some(a) = args("massart") {
            NoiseChannel::Massart(FlipRate::Constant(num(a)?))
        } else if let Some(a) = args("mixture") {
            let (hi, lo) = a.split_once(';').ok_or_else(bad)?;
            NoiseChannel::Mixture { above: NamedLaw::parse(hi)?, below: NamedLaw::parse(lo)? }
        } else {
            return Err(bad());
        };
        ch.validate()?;
        Ok(ch)
    }
}

/// A planted model `y = channel(σ(w⋆·x))`, `x ~ N(0, I_d)`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub d: usize,
    /// Unit vector; drawn uniformly on the sphere from `seed` when absent.
    pub w_star: Option<Vec<f64>>,
    pub link: LinkFunction,
    pub noise: NoiseChannel,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(d: usize, link: LinkFunction, noise: NoiseChannel, seed: u64) -> Self {
        Self { d, w_star: None, link, noise, seed }
    }

    pub fn with_direction(mut self, w: Vec<f64>) -> Self {
        self.w_star = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("model dimension must be >= 1"));
        }
        if let Some(w) = &self.w_star {
            if w.len() != self.d {
                return Err(Error::invalid("w_star length differs from d"));
            }
            if (norm(w) - 1.0).abs() > 1e-10 {
                return Err(Error::invalid("w_star must be a unit vector"));
            }
        }
        self.noise.validate()
    }

    /// The planted direction, resolving the random draw if needed.
    pub fn direction(&self) -> Vec<f64> {
        if let Some(w) = &self.w_star {
            return w.clone();
        }
        let mut rng = stream(self.seed, Domain::Direction, 0);
        loop {
            let mut w: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = norm(&w);
            if n > 1e-300 {
                w.iter_mut().for_each(|v| *v /= n);
                return w;
            }
        }
    }

    /// SHA-256 over a canonical description (direction bits included).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "d={};link={};noise={};seed={};w=",
            self.d,
            self.link.describe(),
            self.noise.describe(),
            self.seed
        ));
        for v in self.direction() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Access to samples by index, either stored or regenerated on demand.
pub trait SampleSource: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Writes features of sample `i` into `x` and returns its label.
    fn fill(&self, i: usize, x: &mut [f64]) -> f64;
}

/// Draws sample `i` of `(model, seed)` with direction `w`.
fn draw_row(model: &ModelSpec, w: &[f64], seed: u64, i: usize, x: &mut [f64]) -> f64 {
    let mut rng = stream(seed, Domain::Features, i as u64);
    x.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
    let z = dot(w, x);
    let mut noise = stream(seed, Domain::LabelNoise, i as u64);
    model.noise.apply(z, model.link.eval(z), &mut noise)
}

/// Samples of a model regenerated from `(seed, i)` without storing `X`.
pub struct ModelStream<'a> {
    model: &'a ModelSpec,
    w: Vec<f64>,
    seed: u64,
    n: usize,
}

impl<'a> ModelStream<'a> {
    pub fn new(model: &'a ModelSpec, n: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(Self { model, w: model.direction(), seed, n })
    }

    /// All labels, generated in parallel; features are discarded.
    pub fn labels(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        y.par_chunks_mut(CHUNK_ROWS).enumerate().for_each(|(c, out)| {
            let mut x = vec![0.0; self.model.d];
            for (j, v) in out.iter_mut().enumerate() {
                *v = draw_row(self.model, &self.w, self.seed, c * CHUNK_ROWS + j, &mut x);
            }
        });
        y
    }
}

impl SampleSource for ModelStream<'_> {
    fn dim(&self) -> usize {
        self.model.d
    }

    fn len(&self) -> usize {
        self.n
    }

    fn fill(&self, i: usize, x: &mut [f64]) -> f64 {
        draw_row(self.model, &self.w, self.seed, i, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub n: usize,
    /// Row-major `n × d`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub digest: String,
}

impl SampleSource for Dataset {
    fn dim(&self) -> usize {
        self.d
    }

    fn len(&self) -> usize {
        self.n
    }

    fn fill(&self, i: usize, x: &mut [f64]) -> f64 {
        x.copy_from_slice(self.row(i));
        self.y[i]
    }
}

/// `n` samples; row `i` depends only on `(model, seed, i)`.
pub fn sample_dataset(model: &ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let d = model.d;
    let w = model.direction();
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    x.par_chunks_mut(CHUNK_ROWS * d).zip(y.par_chunks_mut(CHUNK_ROWS)).enumerate().for_each(|(c, (xs, ys))| {
        for (r, (row, label)) in xs.chunks_mut(d).zip(ys.iter_mut()).enumerate() {
            *label = draw_row(model, &w, seed, c * CHUNK_ROWS + r, row);
        }
    });
    Ok(Dataset { d, n, x, y, seed, digest: model.digest() })
}

impl Dataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Rows `lo..hi` as a new dataset with the same provenance.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Dataset> {
        if lo >= hi || hi > self.n {
            return Err(Error::invalid(format!("bad sample range {lo}..{hi} of {}", self.n)));
        }
        Ok(Dataset {
            d: self.d,
            n: hi - lo,
            x: self.x[lo * self.d..hi * self.d].to_vec(),
            y: self.y[lo..hi].to_vec(),
            seed: self.seed,
            digest: self.digest.clone(),
        })
    }

    /// Projections `w·x_i`.
    pub fn projections(&self, w: &[f64]) -> Vec<f64> {
        self.x.par_chunks(self.d).map(|r| dot(r, w)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "# sindex-v1 d={} n={} seed={} model={}", self.d, self.n, self.seed, self.digest)?;
        let mut line = String::new();
        for i in 0..self.n {
            line.clear();
            for v in self.row(i) {
                let _ = write!(line, "{v:e},");
            }
            let _ = write!(line, "{:e}", self.y[i]);
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let mut lines = BufReader::new(input).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let rest =
            header.strip_prefix("# sindex-v1 ").ok_or_else(|| Error::Parse("missing `# sindex-v1` header".into()))?;
        let (mut d, mut n, mut seed, mut digest) = (None, None, None, None);
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field `{kv}`")))?;
            let bad = || Error::Parse(format!("bad header value `{kv}`"));
            match k {
                "d" => d = Some(v.parse::<usize>().map_err(|_| bad())?),
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "model" if !v.is_empty() && v.bytes().all(|b| b.is_ascii_hexdigit()) => digest = Some(v.to_string()),
                _ => return Err(bad()),
            }
        }
        let missing = |f: &str| Error::Parse(format!("header lacks `{f}`"));
        let (d, n, seed, digest) = (
            d.ok_or_else(|| missing("d"))?,
            n.ok_or_else(|| missing("n"))?,
            seed.ok_or_else(|| missing("seed"))?,
            digest.ok_or_else(|| missing("model"))?,
        );
        if d == 0 {
            return Err(Error::Parse("d must be >= 1".into()));
        }
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = x.len();
            for (j, field) in line.split(',').enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number `{field}`", lineno + 1)))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("row {}: non-finite entry", lineno + 1)));
                }
                if j < d {
                    x.push(v);
                } else if j == d {
                    y.push(v);
                } else {
                    return Err(Error::Parse(format!("row {}: expected {} fields", lineno + 1, d + 1)));
                }
            }
            if x.len() - before != d || y.len() != x.len() / d {
                return Err(Error::Parse(format!("row {}: expected {} fields", lineno + 1, d + 1)));
            }
        }
        if y.len() != n {
            return Err(Error::Parse(format!("header says n={n} but found {} rows", y.len())));
        }
        Ok(Dataset { d, n, x, y, seed, digest })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
