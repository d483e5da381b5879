//! Disutility distributions and reproducible instance sampling.
//!
//! Distributions live on [0, 1], are non-atomic, and have a density bounded
//! between `alpha` and `beta`.  Two families are supported: the standard
//! uniform and piecewise-constant densities, which together realize any
//! (alpha, beta)-bounded regime while keeping moments and CDFs closed-form.

use serde::{Deserialize, Serialize};

use crate::seeding::{derive, unit_open};
use crate::{Error, Result};

const INTEGRAL_TOL: f64 = 1e-12;

/// Distribution family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Uniform01,
    PiecewiseConstant,
}

/// A non-atomic distribution on [0, 1] with density bounds and exact moments.
///
/// `alpha` is the infimum and `beta` the supremum of the density; the
/// normalization `∫₀¹ f = 1` forces `alpha ≤ 1 ≤ beta`.  Construct via
/// [`DistributionSpec::uniform`] or [`DistributionSpec::piecewise`]; fields
/// are immutable after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DistributionSpec {
    kind: DistKind,
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
    alpha: f64,
    beta: f64,
    mean: f64,
    variance: f64,
}

/// Wire form: kind plus the piecewise data; derived fields are recomputed on
/// deserialization so a hand-edited file cannot smuggle stale moments.
#[derive(Serialize, Deserialize)]
struct RawDistribution {
    kind: DistKind,
    #[serde(default)]
    breakpoints: Vec<f64>,
    #[serde(default)]
    densities: Vec<f64>,
}

impl TryFrom<RawDistribution> for DistributionSpec {
    type Error = Error;
    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw.kind {
            DistKind::Uniform01 => Ok(DistributionSpec::uniform()),
            DistKind::PiecewiseConstant => {
                DistributionSpec::piecewise(raw.breakpoints, raw.densities)
            }
        }
    }
}

impl From<DistributionSpec> for RawDistribution {
    fn from(d: DistributionSpec) -> Self {
        RawDistribution {
            kind: d.kind,
            breakpoints: d.breakpoints,
            densities: d.densities,
        }
    }
}

impl DistributionSpec {
    /// The standard uniform distribution on [0, 1].
    pub fn uniform() -> Self {
        DistributionSpec {
            kind: DistKind::Uniform01,
            breakpoints: vec![0.0, 1.0],
            densities: vec![1.0],
            alpha: 1.0,
            beta: 1.0,
            mean: 0.5,
            variance: 1.0 / 12.0,
        }
    }

    /// A piecewise-constant density: `densities[k]` on
    /// `[breakpoints[k], breakpoints[k+1])`.
    ///
    /// Requires breakpoints to start at 0, end at 1, and strictly increase;
    /// densities must be positive and integrate to 1 (within 1e-12).
    pub fn piecewise(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != densities.len() + 1 {
            return Err(Error::InvalidDistribution(format!(
                "need one more breakpoint than densities, got {} and {}",
                breakpoints.len(),
                densities.len()
            )));
        }
        if densities.is_empty() {
            return Err(Error::InvalidDistribution("no pieces".into()));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::InvalidDistribution(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDistribution(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if densities.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidDistribution(
                "densities must be positive and finite".into(),
            ));
        }
        let integral: f64 = densities
            .iter()
            .zip(breakpoints.windows(2))
            .map(|(&d, w)| d * (w[1] - w[0]))
            .sum();
        if (integral - 1.0).abs() > INTEGRAL_TOL {
            return Err(Error::InvalidDistribution(format!(
                "density integrates to {integral}, not 1"
            )));
        }
        let alpha = densities.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = densities.iter().cloned().fold(0.0, f64::max);
        let mut mean = 0.0;
        let mut second = 0.0;
        for (&d, w) in densities.iter().zip(breakpoints.windows(2)) {
            mean += d * (w[1] * w[1] - w[0] * w[0]) / 2.0;
            second += d * (w[1] * w[1] * w[1] - w[0] * w[0] * w[0]) / 3.0;
        }
        let variance = second - mean * mean;
        Ok(DistributionSpec {
            kind: DistKind::PiecewiseConstant,
            breakpoints,
            densities,
            alpha,
            beta,
            mean,
            variance,
        })
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    /// Infimum of the density over [0, 1].
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Supremum of the density over [0, 1].
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// CDF at `x` (clamped outside [0, 1]).
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self.kind {
            DistKind::Uniform01 => x,
            DistKind::PiecewiseConstant => {
                let mut acc = 0.0;
                for (&d, w) in self.densities.iter().zip(self.breakpoints.windows(2)) {
                    if x >= w[1] {
                        acc += d * (w[1] - w[0]);
                    } else {
                        acc += d * (x - w[0]);
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    /// Quantile function: the x with F(x) = q.  Strictly increasing densities
    /// make the inverse unique; endpoints map to 0 and 1 exactly.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidConfig(format!("quantile {q} outside [0,1]")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        if q == 1.0 {
            return Ok(1.0);
        }
        match self.kind {
            DistKind::Uniform01 => Ok(q),
            DistKind::PiecewiseConstant => {
                let mut acc = 0.0;
                for (&d, w) in self.densities.iter().zip(self.breakpoints.windows(2)) {
                    let piece = d * (w[1] - w[0]);
                    if q <= acc + piece {
                        return Ok((w[0] + (q - acc) / d).min(1.0));
                    }
                    acc += piece;
                }
                Ok(1.0)
            }
        }
    }
}

/// Quantile function as a free operation; see [`DistributionSpec::inverse_cdf`].
pub fn inverse_cdf(dist: &DistributionSpec, q: f64) -> Result<f64> {
    dist.inverse_cdf(q)
}

/// An n×m grid of per-agent chore costs, entry (i, j) = dᵢ(j).
///
/// Entries lie in [0, 1].  Matrices produced by [`sample_instance`]
/// additionally have all entries strictly positive and pairwise distinct, so
/// every agent has a unique favorite chore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DisutilityMatrix {
    n: usize,
    m: usize,
    costs: Vec<Vec<f64>>,
    resampled: bool,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    n: usize,
    m: usize,
    costs: Vec<Vec<f64>>,
}

impl TryFrom<RawMatrix> for DisutilityMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        let mat = DisutilityMatrix::new(raw.costs)?;
        if mat.n != raw.n || mat.m != raw.m {
            return Err(Error::DimensionMismatch(format!(
                "declared {}x{} but costs are {}x{}",
                raw.n, raw.m, mat.n, mat.m
            )));
        }
        Ok(mat)
    }
}

impl From<DisutilityMatrix> for RawMatrix {
    fn from(m: DisutilityMatrix) -> Self {
        RawMatrix {
            n: m.n,
            m: m.m,
            costs: m.costs,
        }
    }
}

impl DisutilityMatrix {
    /// Wraps a cost grid, validating shape and the [0, 1] entry range.
    /// Degenerate shapes (one agent or one chore) are allowed here; the
    /// sampler enforces its own n, m ≥ 2 floor.
    pub fn new(costs: Vec<Vec<f64>>) -> Result<Self> {
        let n = costs.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("no agents".into()));
        }
        let m = costs[0].len();
        if m == 0 {
            return Err(Error::InvalidMatrix("no chores".into()));
        }
        for (i, row) in costs.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidMatrix(format!(
                    "row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) = {c} outside [0,1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(DisutilityMatrix {
            n,
            m,
            costs,
            resampled: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// dᵢ(j), with 0-based indices.
    #[inline]
    pub fn cost(&self, agent: usize, chore: usize) -> f64 {
        self.costs[agent][chore]
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.costs[agent]
    }

    /// dᵢ(M): the agent's cost for the full chore set, summed in index order
    /// so equality comparisons downstream see one canonical value.
    pub fn total(&self, agent: usize) -> f64 {
        self.costs[agent].iter().sum()
    }

    /// The agent's favorite chore (argmin of her row, lowest index on ties).
    pub fn favorite(&self, agent: usize) -> usize {
        let row = &self.costs[agent];
        let mut best = 0;
        for j in 1..self.m {
            if row[j] < row[best] {
                best = j;
            }
        }
        best
    }

    /// Whether the sampler had to resample entries to break ties or zeros.
    pub fn was_resampled(&self) -> bool {
        self.resampled
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serializes")
    }
}

fn entry_bits(seed: u64, i: usize, j: usize) -> u64 {
    derive(derive(seed, i as u64), j as u64)
}

fn sample_matrix_raw(n: usize, m: usize, dist: &DistributionSpec, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut costs = vec![vec![0.0; m]; n];
    for (i, row) in costs.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = dist.inverse_cdf(unit_open(entry_bits(seed, i, j)))?;
        }
    }
    Ok(costs)
}

/// Draws an n×m matrix of i.i.d. costs from `dist`.
///
/// Entry (i, j) is a pure function of `(seed, i, j)` and the distribution, so
/// identical inputs reproduce the matrix bit-for-bit on any platform and in
/// any evaluation order.  Zero or duplicate entries (possible in floats,
/// measure-zero in theory) are broken by resampling the offenders from a
/// derived stream, which keeps the unique-favorite assumption literally true.
pub fn sample_instance(
    n: usize,
    m: usize,
    dist: &DistributionSpec,
    seed: u64,
) -> Result<DisutilityMatrix> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 agents and 2 chores, got n={n}, m={m}"
        )));
    }
    let costs = sample_matrix_raw(n, m, dist, seed)?;
    finish_matrix(costs, dist, seed)
}

/// Sampler without the n, m ≥ 2 floor, for estimators that legitimately probe
/// degenerate shapes (e.g. variance of the repeated-favorite count at m = 1).
pub(crate) fn sample_instance_unchecked(
    n: usize,
    m: usize,
    dist: &DistributionSpec,
    seed: u64,
) -> Result<DisutilityMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("empty instance".into()));
    }
    let costs = sample_matrix_raw(n, m, dist, seed)?;
    finish_matrix(costs, dist, seed)
}

fn finish_matrix(
    mut costs: Vec<Vec<f64>>,
    dist: &DistributionSpec,
    seed: u64,
) -> Result<DisutilityMatrix> {
    let n = costs.len();
    let m = costs[0].len();
    let mut resampled = false;
    for round in 1..=64 {
        let mut seen = std::collections::HashMap::with_capacity(n * m);
        let mut offenders = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let v = costs[i][j];
                // First occupant of a value keeps it; later ones redraw.
                if v <= 0.0 || v >= 1.0 || seen.insert(v.to_bits(), (i, j)).is_some() {
                    offenders.push((i, j));
                }
            }
        }
        if offenders.is_empty() {
            return Ok(DisutilityMatrix {
                n,
                m,
                costs,
                resampled,
            });
        }
        resampled = true;
        let sub = derive(seed, 0x7265_646f ^ round);
        for &(i, j) in &offenders {
            costs[i][j] = dist.inverse_cdf(unit_open(entry_bits(sub, i, j)))?;
        }
    }
    Err(Error::InvalidMatrix(
        "could not break ties after 64 resampling rounds".into(),
    ))
}
