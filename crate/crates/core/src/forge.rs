//! Smooth links with a prescribed generative exponent.
//!
//! Start from perturbed roots of `He_k`, move them with
//! `x_i' = v(x)_i / γ(x_i)` (which keeps `Σ He_j(x_i) γ(x_i) x_i'` at zero for
//! `j < k`), read off `σ̂(x) = |t|` along each trajectory and smooth the
//! result with a flat-ended monotone bump.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exponent::{lambda_coeffs_quadrature, QuadratureOptions, SpectralProfile};
use crate::hermite::{
    eval_hermite, gauss_hermite_rule, gaussian_cdf, gaussian_pdf, sym_poly_q_slice, vandermonde_weights_slice,
    HermiteKind, PointConfig,
};
use crate::link::LinkFunction;
use crate::quad::{adaptive_gk, gl20};
use crate::rng::{stream, Domain};

pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_STEPS: usize = 2000;
pub const SAMPLES_PER_BRANCH: usize = 4096;
pub const TAU_FLOOR: f64 = 1e-4;
const MAX_INIT_TRIES: usize = 100;
const MIN_ABS_Q: f64 = 1e-8;

/// Perturbed `He_k` roots with `Q ≠ 0` and `v > 0`.
pub fn init_level_points(kstar: usize, eps: f64, seed: u64) -> Result<PointConfig> {
    if !(2..=10).contains(&kstar) {
        return Err(Error::invalid(format!("kstar must be in 2..=10, got {kstar}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps must be non-negative"));
    }
    let roots = gauss_hermite_rule(kstar)?.nodes;
    for attempt in 0..MAX_INIT_TRIES {
        let mut rng = stream(seed, Domain::Forge, attempt as u64);
        let pts: Vec<f64> =
            roots.iter().map(|r| if eps > 0.0 { r + rng.random_range(-eps..=eps) } else { *r }).collect();
        if !pts.windows(2).all(|w| w[1] > w[0]) {
            continue;
        }
        let Ok(config) = PointConfig::new(pts) else {
            continue;
        };
        let q = sym_poly_q_slice(config.points());
        let v = vandermonde_weights_slice(config.points());
        if q.abs() > MIN_ABS_Q && v.iter().all(|&x| x > 0.0) {
            return Ok(config);
        }
    }
    Err(Error::ResamplingExhausted { tries: MAX_INIT_TRIES })
}

/// `Z_k = Σ_i He_{k−1}(x_i) γ(x_i)` for `k = 1..=kmax`.
pub fn conserved_quantities(x: &[f64], kmax: usize) -> Vec<f64> {
    (1..=kmax)
        .map(|k| x.iter().map(|&xi| eval_hermite(HermiteKind::Unnormalized, k - 1, xi) * gaussian_pdf(xi)).sum())
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    /// Ascending grid on `[−τ, τ]`.
    pub times: Vec<f64>,
    /// `positions[m][i] = x_i(times[m])`.
    pub positions: Vec<Vec<f64>>,
    /// Right-hand side evaluated at the stored positions.
    pub velocities: Vec<Vec<f64>>,
    /// `conserved[m][k−1] = Z_k(times[m])`, `k = 1..=n`.
    pub conserved: Vec<Vec<f64>>,
    pub tau: f64,
    pub step: f64,
    /// How many times `τ` was halved before the invariants held.
    pub halvings: usize,
}

impl TrajectoryBundle {
    pub fn branch_count(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Index of `t = 0` on the grid.
    pub fn origin(&self) -> usize {
        self.times.len() / 2
    }

    /// `max_{k<n} max_t |Z_k(t) − Z_k(0)|`.
    pub fn conservation_drift(&self) -> f64 {
        let n = self.branch_count();
        let z0 = &self.conserved[self.origin()];
        self.conserved.iter().flat_map(|z| (0..n - 1).map(move |k| (z[k] - z0[k]).abs())).fold(0.0, f64::max)
    }

    /// `Z_n(τ) − Z_n(−τ)`.
    pub fn top_degree_gap(&self) -> f64 {
        let n = self.branch_count();
        self.conserved.last().unwrap()[n - 1] - self.conserved[0][n - 1]
    }

    fn check(&self) -> std::result::Result<(), String> {
        for (m, x) in self.positions.iter().enumerate() {
            if !x.windows(2).all(|w| w[1] > w[0]) {
                return Err(format!("ordering lost at t={}", self.times[m]));
            }
            if !self.velocities[m].iter().all(|&v| v > 0.0 && v.is_finite()) {
                return Err(format!("non-positive velocity at t={}", self.times[m]));
            }
        }
        let (first, last) = (&self.positions[0], self.positions.last().unwrap());
        for i in 0..self.branch_count().saturating_sub(1) {
            if last[i] >= first[i + 1] {
                return Err(format!("branch images {i} and {} overlap", i + 1));
            }
        }
        Ok(())
    }
}

fn level_rhs(x: &[f64]) -> Vec<f64> {
    vandermonde_weights_slice(x).into_iter().zip(x).map(|(v, &xi)| v / gaussian_pdf(xi)).collect()
}

fn rk4_path(x0: &[f64], h: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = x0.len();
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    path.push(x.clone());
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        let k1 = level_rhs(&x);
        (0..n).for_each(|i| tmp[i] = x[i] + 0.5 * h * k1[i]);
        let k2 = level_rhs(&tmp);
        (0..n).for_each(|i| tmp[i] = x[i] + 0.5 * h * k2[i]);
        let k3 = level_rhs(&tmp);
        (0..n).for_each(|i| tmp[i] = x[i] + h * k3[i]);
        let k4 = level_rhs(&tmp);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        path.push(x.clone());
    }
    path
}

/// Classical RK4 forward to `+τ` and backward to `−τ` from `x0` at `t = 0`.
///
/// If points cross, a velocity turns non-positive, or branch images
/// overlap, `τ` and `h` are halved together and the integration restarts.
pub fn integrate_level_ode(x0: &PointConfig, tau: f64, h: f64) -> Result<TrajectoryBundle> {
    if !(tau > 0.0 && h > 0.0 && h <= tau) {
        return Err(Error::invalid("need 0 < h <= tau"));
    }
    let steps = (tau / h).round().max(1.0) as usize;
    let n = x0.len();
    let mut tau = tau;
    let mut halvings = 0;
    loop {
        if tau < TAU_FLOOR {
            return Err(Error::TauFloor { tau });
        }
        let h = tau / steps as f64;
        let forward = rk4_path(x0.points(), h, steps);
        let backward = rk4_path(x0.points(), -h, steps);
        let mut positions: Vec<Vec<f64>> = backward.into_iter().rev().collect();
        positions.extend(forward.into_iter().skip(1));
        let times = (0..=2 * steps).map(|m| (m as f64 - steps as f64) * h).collect();
        let velocities = positions.iter().map(|x| level_rhs(x)).collect();
        let conserved = positions.iter().map(|x| conserved_quantities(x, n)).collect();
        let bundle = TrajectoryBundle { times, positions, velocities, conserved, tau, step: h, halvings };
        if bundle.check().is_ok() {
            return Ok(bundle);
        }
        tau *= 0.5;
        halvings += 1;
    }
}

/// `f(s) = (1/Z) ∫_0^s exp(−1/(u(1−u))) du`: smooth, strictly increasing,
/// with every derivative vanishing at both ends.
#[derive(Debug, Clone)]
pub struct Mollifier {
    normalizer: f64,
    /// `cumulative[i] = f(i / CELLS)`.
    cumulative: Vec<f64>,
}

const MOLLIFIER_CELLS: usize = 1024;

fn bump(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

impl Default for Mollifier {
    fn default() -> Self {
        Self::new()
    }
}

impl Mollifier {
    pub fn new() -> Self {
        let (normalizer, _) = adaptive_gk(bump, 0.0, 1.0, 1e-16);
        let rule = gl20();
        let mut cumulative = Vec::with_capacity(MOLLIFIER_CELLS + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..MOLLIFIER_CELLS {
            let a = i as f64 / MOLLIFIER_CELLS as f64;
            let b = (i + 1) as f64 / MOLLIFIER_CELLS as f64;
            acc += rule.integrate(a, b, bump);
            cumulative.push(acc / normalizer);
        }
        // the panel sum and the adaptive normalizer agree to ~1e-15; pin the end
        let last = *cumulative.last().unwrap();
        cumulative.iter_mut().for_each(|c| *c /= last);
        Self { normalizer: normalizer * last, cumulative }
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        let pos = s * MOLLIFIER_CELLS as f64;
        let i = (pos.floor() as usize).min(MOLLIFIER_CELLS - 1);
        let a = i as f64 / MOLLIFIER_CELLS as f64;
        (self.cumulative[i] + gl20().integrate(a, s, bump) / self.normalizer).min(1.0)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        bump(s) / self.normalizer
    }

    /// `f^{-1}(y)` for `y ∈ [0, 1]`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        let i = self.cumulative.partition_point(|&c| c <= y).clamp(1, MOLLIFIER_CELLS) - 1;
        let (mut lo, mut hi) = (i as f64 / MOLLIFIER_CELLS as f64, (i + 1) as f64 / MOLLIFIER_CELLS as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// One monotone trajectory `t ↦ x_i(t)` stored on the RK4 grid with
/// derivatives, interpolated by cubic Hermite splines.
#[derive(Debug, Clone)]
struct Branch {
    x: Vec<f64>,
    dx: Vec<f64>,
}

/// A root of a tabulated level set: position and `γ(x)·|dx/dt|`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TableRoot {
    pub z: f64,
    pub sign: f64,
    pub weight: f64,
}

/// Forged link: branch inverses, plateau, mollifier and a dense sampling.
#[derive(Debug, Clone)]
pub struct LinkTable {
    pub kstar: usize,
    /// Horizon after any halving.
    pub tau: f64,
    /// Horizon that was requested.
    pub tau_requested: f64,
    pub eps: f64,
    pub seed: u64,
    pub steps: usize,
    t0: f64,
    dt: f64,
    branches: Vec<Branch>,
    mollifier: Mollifier,
    /// `(x, σ(x))`, ascending in `x`.
    pub samples: Vec<(f64, f64)>,
    /// Profile measured at forge time, if verification ran.
    pub verification: Option<SpectralProfile>,
}

impl LinkTable {
    pub fn describe(&self) -> String {
        format!("kstar={} tau={} eps={} seed={}", self.kstar, self.tau, self.eps, self.seed)
    }

    pub fn branch_image(&self, j: usize) -> (f64, f64) {
        let b = &self.branches[j];
        (b.x[0], *b.x.last().unwrap())
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    fn cell(&self, t: f64) -> (usize, f64) {
        let last = self.branches[0].x.len() - 2;
        let pos = ((t - self.t0) / self.dt).clamp(0.0, (last + 1) as f64);
        let m = (pos.floor() as usize).min(last);
        (m, pos - m as f64)
    }

    /// `(x_j(t), x_j'(t))` from the cubic Hermite interpolant.
    pub fn position(&self, j: usize, t: f64) -> (f64, f64) {
        let b = &self.branches[j];
        let (m, s) = self.cell(t);
        let (p0, p1) = (b.x[m], b.x[m + 1]);
        let (m0, m1) = (b.dx[m] * self.dt, b.dx[m + 1] * self.dt);
        let s2 = s * s;
        let s3 = s2 * s;
        let x =
            (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * m1;
        let dx = ((6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1)
            / self.dt;
        (x, dx)
    }

    /// `t` with `x_j(t) = x`, for `x` inside the branch image.
    pub fn inverse(&self, j: usize, x: f64) -> f64 {
        let b = &self.branches[j];
        let m = b.x.partition_point(|&v| v <= x).clamp(1, b.x.len() - 1) - 1;
        let (mut lo, mut hi) = (self.t0 + m as f64 * self.dt, self.t0 + (m + 1) as f64 * self.dt);
        let mut t = lo + (x - b.x[m]) / (b.x[m + 1] - b.x[m]) * self.dt;
        for _ in 0..60 {
            let (p, dp) = self.position(j, t);
            let r = p - x;
            if r == 0.0 {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = t - r / dp;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-16 * (1.0 + t.abs()) {
                t = next;
                break;
            }
            t = next;
        }
        t
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let j = self.branches.partition_point(|b| b.x[0] <= x);
        if j == 0 {
            return None;
        }
        let (lo, hi) = self.branch_image(j - 1);
        (x >= lo && x <= hi).then_some(j - 1)
    }

    /// `σ̂(x) = |x_j^{-1}(x)|` on branch images, `τ` elsewhere.
    pub fn sigma_hat(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some(j) => self.inverse(j, x).abs().min(self.tau),
            None => self.tau,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mollifier.eval(self.sigma_hat(x) / self.tau)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some(j) => {
                let t = self.inverse(j, x);
                let (_, dx) = self.position(j, t);
                self.mollifier.derivative(t.abs() / self.tau) / self.tau * t.signum() / dx
            }
            None => 0.0,
        }
    }

    pub fn plateau_level(&self) -> f64 {
        1.0
    }

    pub fn plateau_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.branches.len() + 1);
        let mut left = f64::NEG_INFINITY;
        for j in 0..self.branches.len() {
            let (lo, hi) = self.branch_image(j);
            out.push((left, lo));
            left = hi;
        }
        out.push((left, f64::INFINITY));
        out
    }

    /// Branch ends and centres.
    pub fn structural_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for j in 0..self.branches.len() {
            let (lo, hi) = self.branch_image(j);
            pts.extend([lo, self.position(j, 0.0).0, hi]);
        }
        pts
    }

    /// Pre-mollifier level `σ̂` corresponding to `σ = y`.
    pub fn key_from_level(&self, y: f64) -> f64 {
        self.tau * self.mollifier.inverse(y)
    }

    /// Roots of `σ̂ = s` for `s ∈ (0, τ)`; weights on the `σ̂` scale
    /// (the mollifier slope is common to all roots and cancels in ratios).
    pub(crate) fn level_roots(&self, s: f64) -> Vec<TableRoot> {
        let mut roots = Vec::with_capacity(2 * self.branches.len());
        for j in 0..self.branches.len() {
            for (t, sign) in [(-s, -1.0), (s, 1.0)] {
                let (z, dx) = self.position(j, t);
                roots.push(TableRoot { z, sign, weight: gaussian_pdf(z) * dx.abs() });
            }
        }
        roots
    }

    /// Probability that `Z` lands on the plateau.
    pub fn plateau_mass(&self) -> f64 {
        self.plateau_intervals().iter().map(|&(a, b)| gaussian_cdf(b) - gaussian_cdf(a)).sum()
    }

    fn sample_grid(&mut self, per_branch: usize) {
        let mut samples = Vec::with_capacity(per_branch * self.branches.len());
        for j in 0..self.branches.len() {
            for m in 0..per_branch {
                let t = -self.tau + 2.0 * self.tau * m as f64 / (per_branch - 1) as f64;
                let (x, _) = self.position(j, t);
                samples.push((x, self.mollifier.eval(t.abs() / self.tau)));
            }
        }
        self.samples = samples;
    }

    /// Writes the structured header and `x,sigma` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# sindex-link-v1 kstar={} tau={:e} tau_requested={:e} eps={:e} seed={} steps={} branches={} samples={}",
            self.kstar,
            self.tau,
            self.tau_requested,
            self.eps,
            self.seed,
            self.steps,
            self.branches.len(),
            self.samples.len()
        )?;
        if let Some(p) = &self.verification {
            let mut line = String::from("# verification");
            for (k, l) in p.lambda.iter().enumerate() {
                let _ = write!(line, " lambda{}={:e}", k + 1, l);
            }
            match p.gen_exponent {
                Some(g) => {
                    let _ = write!(line, " gen_exponent={g}");
                }
                None => line.push_str(" gen_exponent=none"),
            }
            writeln!(w, "{line}")?;
        }
        writeln!(w, "x,sigma")?;
        for (x, s) in &self.samples {
            writeln!(w, "{x:e},{s:e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    /// Rebuilds the link from the header parameters and checks the stored
    /// samples against the rebuilt ones.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty link file".into()))??;
        let rest = header
            .strip_prefix("# sindex-link-v1 ")
            .ok_or_else(|| Error::Parse("missing `# sindex-link-v1` header".into()))?;
        let field = |name: &str| -> Result<&str> {
            rest.split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("link header lacks `{name}`")))
        };
        let num =
            |name: &str| -> Result<f64> { field(name)?.parse().map_err(|_| Error::Parse(format!("bad `{name}`"))) };
        let kstar = num("kstar")? as usize;
        let tau_requested = num("tau_requested")?;
        let eps = num("eps")?;
        let seed: u64 = field("seed")?.parse().map_err(|_| Error::Parse("bad `seed`".into()))?;
        let steps = num("steps")? as usize;
        let count = num("samples")? as usize;
        let branches = num("branches")? as usize;
        let per_branch = if branches == 0 { 0 } else { count / branches };

        let mut stored = Vec::with_capacity(count);
        for line in lines {
            let line = line?;
            if line.starts_with('#') || line == "x,sigma" || line.trim().is_empty() {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
            let x: f64 = a.trim().parse().map_err(|_| Error::Parse(format!("bad row `{line}`")))?;
            let s: f64 = b.trim().parse().map_err(|_| Error::Parse(format!("bad row `{line}`")))?;
            stored.push((x, s));
        }
        if stored.len() != count {
            return Err(Error::Parse(format!("expected {count} rows, found {}", stored.len())));
        }
        let params =
            ForgeParams { tau: tau_requested, eps, seed, steps, samples_per_branch: per_branch, verify: false };
        let table = build_table(kstar, &params)?;
        let worst = table
            .samples
            .iter()
            .zip(&stored)
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max);
        if worst > 1e-12 {
            return Err(Error::Verification(format!("stored samples differ from the rebuilt link by {worst:e}")));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(f)
    }
}

/// Builds the link table from a trajectory bundle.
pub fn assemble_link(bundle: &TrajectoryBundle) -> Result<LinkTable> {
    let n = bundle.branch_count();
    if n == 0 || bundle.times.len() < 2 {
        return Err(Error::invalid("empty trajectory bundle"));
    }
    let branches: Vec<Branch> = (0..n)
        .map(|i| Branch {
            x: bundle.positions.iter().map(|p| p[i]).collect(),
            dx: bundle.velocities.iter().map(|v| v[i]).collect(),
        })
        .collect();
    for i in 0..n - 1 {
        let end = *branches[i].x.last().unwrap();
        let start = branches[i + 1].x[0];
        if end >= start {
            return Err(Error::OverlappingBranches { left: i, right: i + 1, end, start });
        }
    }
    Ok(LinkTable {
        kstar: n,
        tau: bundle.tau,
        tau_requested: bundle.tau * f64::powi(2.0, bundle.halvings as i32),
        eps: f64::NAN,
        seed: 0,
        steps: bundle.origin(),
        t0: bundle.times[0],
        dt: bundle.step,
        branches,
        mollifier: Mollifier::new(),
        samples: Vec::new(),
        verification: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeParams {
    pub tau: f64,
    pub eps: f64,
    pub seed: u64,
    /// RK4 steps per direction, `h = τ / steps`.
    pub steps: usize,
    pub samples_per_branch: usize,
    pub verify: bool,
}

impl Default for ForgeParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            eps: DEFAULT_EPS,
            seed: 0,
            steps: DEFAULT_STEPS,
            samples_per_branch: SAMPLES_PER_BRANCH,
            verify: true,
        }
    }
}

fn build_table(kstar: usize, params: &ForgeParams) -> Result<LinkTable> {
    let x0 = init_level_points(kstar, params.eps, params.seed)?;
    let bundle = integrate_level_ode(&x0, params.tau, params.tau / params.steps as f64)?;
    let mut table = assemble_link(&bundle)?;
    table.eps = params.eps;
    table.seed = params.seed;
    table.tau_requested = params.tau;
    if params.samples_per_branch >= 2 {
        table.sample_grid(params.samples_per_branch);
    }
    Ok(table)
}

/// Thresholds for accepting a forged link.
pub const VERIFY_BELOW: f64 = 1e-6;
pub const VERIFY_ABOVE: f64 = 1e-4;

/// Init → integrate → assemble → verify by quadrature.
pub fn forge_link(kstar: usize, params: &ForgeParams) -> Result<(LinkTable, SpectralProfile)> {
    if !(2..=8).contains(&kstar) {
        return Err(Error::invalid(format!("forge supports 2 <= kstar <= 8, got {kstar}")));
    }
    let mut table = build_table(kstar, params)?;
    let link = LinkFunction::Tabulated(Arc::new(table.clone()));
    let profile = lambda_coeffs_quadrature(&link, kstar, &QuadratureOptions::default())?;
    table.verification = Some(profile.clone());
    if params.verify {
        let low_ok = profile.lambda[..kstar - 1].iter().all(|&l| l < VERIFY_BELOW);
        let top_ok = profile.lambda[kstar - 1] > VERIFY_ABOVE;
        if !(low_ok && top_ok) {
            return Err(Error::Verification(format!(
                "forged link for kstar={kstar} has lambda = {:?}",
                profile.lambda
            )));
        }
    }
    Ok((table, profile))
}
