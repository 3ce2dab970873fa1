//! Empirical summaries: raw moments, step ECDF, face-count PMF and
//! Epanechnikov kernel density estimates.
//!
//! Note that `mu_k` below are *raw* moments `E[X^k]`, not central moments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::compensated_sum;

/// Number of points in the default density export grid.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Size of the default log-spaced bandwidth candidate grid.
pub const DEFAULT_CANDIDATES: usize = 30;

/// Samples up to this size use the exact pairwise LSCV score; larger ones are binned.
pub const EXACT_LSCV_MAX_N: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("evaluation grid must be non-empty and ascending")]
    InvalidGrid,
    #[error("no bandwidth candidates supplied")]
    NoCandidates,
}

/// Raw moments and the sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu1: f64,
    pub sigma: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
}

pub fn moments(sample: &[f64]) -> Result<Moments, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let raw = |k: i32| compensated_sum(sample.iter().map(|x| x.powi(k))) / nf;
    let mu1 = raw(1);
    let ss = compensated_sum(sample.iter().map(|x| (x - mu1) * (x - mu1)));
    Ok(Moments {
        mu1,
        sigma: (ss / (nf - 1.0)).sqrt(),
        mu2: raw(2),
        mu3: raw(3),
        mu4: raw(4),
    })
}

/// A sorted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::TooFew { needed: 1, got: 0 });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, StatsError> {
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Number of observations `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    /// Number of observations `< x`.
    pub fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }

    /// Right-continuous `F_n(x)`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.n() as f64
    }

    /// Distinct values with `F_n` at each, i.e. the corners of the step function.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.n() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }

    /// Empirical quantiles at the plotting positions `i / (n + 1)`, `i = 1..=n`.
    pub fn plotting_positions(&self) -> Vec<(f64, f64)> {
        let n1 = (self.n() + 1) as f64;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i + 1) as f64 / n1, v))
            .collect()
    }

    pub fn moments(&self) -> Result<Moments, StatsError> {
        moments(&self.values)
    }
}

pub fn ecdf(dist: &EmpiricalDistribution, x: f64) -> f64 {
    dist.ecdf(x)
}

/// Face-count frequencies, kept as integer counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FacePmf {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

impl FacePmf {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, faces: u32) -> u64 {
        self.counts.get(&faces).copied().unwrap_or(0)
    }

    pub fn probability(&self, faces: u32) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(faces) as f64 / self.total as f64
        }
    }

    /// `(F, n_f, p_f)` rows in increasing `F`.
    pub fn rows(&self) -> Vec<(u32, u64, f64)> {
        self.counts
            .iter()
            .map(|(&f, &c)| (f, c, c as f64 / self.total as f64))
            .collect()
    }

    /// Most frequent face count (smallest on ties).
    pub fn mode(&self) -> Option<u32> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&f, _)| f)
    }

    pub fn merge(&mut self, other: &FacePmf) {
        for (&f, &c) in &other.counts {
            *self.counts.entry(f).or_insert(0) += c;
        }
        self.total += other.total;
    }

    /// Total variation distance to another PMF given as `(F, p_f)` pairs.
    pub fn total_variation(&self, other: &[(u32, f64)]) -> f64 {
        let mut keys: Vec<u32> = self.counts.keys().copied().chain(other.iter().map(|o| o.0)).collect();
        keys.sort_unstable();
        keys.dedup();
        let q = |f: u32| other.iter().find(|o| o.0 == f).map_or(0.0, |o| o.1);
        0.5 * keys.iter().map(|&f| (self.probability(f) - q(f)).abs()).sum::<f64>()
    }

    pub fn as_pairs(&self) -> Vec<(u32, f64)> {
        self.rows().into_iter().map(|(f, _, p)| (f, p)).collect()
    }
}

pub fn face_pmf(face_counts: &[u32]) -> FacePmf {
    let mut counts = BTreeMap::new();
    for &f in face_counts {
        *counts.entry(f).or_insert(0) += 1;
    }
    FacePmf {
        counts,
        total: face_counts.len() as u64,
    }
}

/// Density values on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Self-convolution of the Epanechnikov kernel, supported on `|u| < 2`.
#[inline]
pub fn epanechnikov_convolved(u: f64) -> f64 {
    let a = u.abs();
    if a < 2.0 {
        3.0 / 160.0 * (2.0 - a).powi(3) * (a * a + 6.0 * a + 4.0)
    } else {
        0.0
    }
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Export grid: `points` equally spaced values on `[0, max + 3h]`.
pub fn default_grid(sample: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let max = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linear_grid(0.0, max + 3.0 * bandwidth, points)
}

/// No boundary correction is applied, so near 0 the estimate of a positive
/// variable is biased low.
pub fn kde_epanechnikov(sample: &[f64], bandwidth: f64, grid: &[f64]) -> Result<DensityEstimate, StatsError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(StatsError::InvalidBandwidth(bandwidth));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StatsError::InvalidGrid);
    }
    let sorted = EmpiricalDistribution::from_slice(sample)?;
    let xs = sorted.values();
    let norm = 1.0 / (xs.len() as f64 * bandwidth);
    let density = grid
        .iter()
        .map(|&x| {
            let lo = xs.partition_point(|&v| v <= x - bandwidth);
            let hi = xs.partition_point(|&v| v < x + bandwidth);
            norm * xs[lo..hi]
                .iter()
                .map(|&v| epanechnikov((x - v) / bandwidth))
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        grid: grid.to_vec(),
        density,
        bandwidth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthFlag {
    /// All observations coincide; the score decreases without bound as `h → 0`.
    DegenerateSample,
    SmallestCandidate,
    LargestCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub bandwidth: f64,
    pub score: f64,
    pub flag: Option<BandwidthFlag>,
}

/// `count` log-spaced bandwidths around the normal-reference value
/// `2.34 σ n^(-1/5)`, from a tenth of it to three times it.
pub fn default_candidates(sample: &[f64], count: usize) -> Vec<f64> {
    let n = sample.len().max(2) as f64;
    let sd = moments(sample).map(|m| m.sigma).unwrap_or(0.0);
    let scale = if sd > 0.0 {
        sd
    } else {
        sample.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0)
    };
    let reference = 2.34 * scale * n.powf(-0.2);
    let (lo, hi) = ((reference / 10.0).ln(), (reference * 3.0).ln());
    linear_grid(lo, hi, count).into_iter().map(f64::exp).collect()
}

/// Least-squares cross-validation score
/// `∫ f̂_h² − (2/n) Σ f̂_{h,−i}(X_i)`, evaluated exactly.
pub fn lscv_score_exact(sorted: &[f64], h: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let (mut conv, mut leave_out) = (0.0, 0.0);
    for i in 0..n {
        for &xj in &sorted[i + 1..] {
            let u = (xj - sorted[i]) / h;
            if u >= 2.0 {
                break;
            }
            conv += epanechnikov_convolved(u);
            leave_out += epanechnikov(u);
        }
    }
    let integral_sq = (nf * epanechnikov_convolved(0.0) + 2.0 * conv) / (nf * nf * h);
    let loo = 2.0 * leave_out / ((nf - 1.0) * h);
    integral_sq - 2.0 * loo / nf
}

/// Pair-difference histogram for the binned LSCV score.
struct PairBins {
    width: f64,
    /// `lag[l]`: number of ordered pairs `i != j` whose bins are `l` apart.
    lag: Vec<f64>,
    n: f64,
}

impl PairBins {
    fn new(sorted: &[f64], width: f64, max_lag: usize) -> Self {
        let lo = sorted[0];
        let nbins = ((sorted[sorted.len() - 1] - lo) / width).floor() as usize + 1;
        let mut counts = vec![0.0f64; nbins];
        for &x in sorted {
            let b = (((x - lo) / width).round() as usize).min(nbins - 1);
            counts[b] += 1.0;
        }
        let max_lag = max_lag.min(nbins - 1);
        let mut lag = vec![0.0; max_lag + 1];
        for (b, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            lag[0] += c * (c - 1.0);
            for l in 1..=max_lag.min(nbins - 1 - b) {
                lag[l] += 2.0 * c * counts[b + l];
            }
        }
        Self {
            width,
            lag,
            n: sorted.len() as f64,
        }
    }

    fn score(&self, h: f64) -> f64 {
        let (mut conv, mut leave_out) = (0.0, 0.0);
        for (l, &p) in self.lag.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let u = l as f64 * self.width / h;
            if u >= 2.0 {
                break;
            }
            conv += p * epanechnikov_convolved(u);
            leave_out += p * epanechnikov(u);
        }
        let n = self.n;
        let integral_sq = (n * epanechnikov_convolved(0.0) + conv) / (n * n * h);
        integral_sq - 2.0 * leave_out / (n * (n - 1.0) * h)
    }
}

/// Bandwidth minimising the LSCV score over `candidates`.
///
/// Samples larger than [`EXACT_LSCV_MAX_N`] are binned into a histogram of
/// pair differences with bin width `h_min / 50` before scoring.
pub fn cv_bandwidth(sample: &[f64], candidates: &[f64]) -> Result<BandwidthChoice, StatsError> {
    if candidates.is_empty() {
        return Err(StatsError::NoCandidates);
    }
    if let Some(&h) = candidates.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(StatsError::InvalidBandwidth(h));
    }
    if sample.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: sample.len() });
    }
    let sorted = EmpiricalDistribution::from_slice(sample)?;
    let xs = sorted.values();
    let mut hs = candidates.to_vec();
    hs.sort_by(f64::total_cmp);
    let (h_min, h_max) = (hs[0], hs[hs.len() - 1]);

    if xs[0] == xs[xs.len() - 1] {
        return Ok(BandwidthChoice {
            bandwidth: h_min,
            score: lscv_score_exact(xs, h_min),
            flag: Some(BandwidthFlag::DegenerateSample),
        });
    }

    let scores: Vec<f64> = if xs.len() <= EXACT_LSCV_MAX_N {
        hs.iter().map(|&h| lscv_score_exact(xs, h)).collect()
    } else {
        let width = h_min / 50.0;
        let max_lag = (2.0 * h_max / width).ceil() as usize + 1;
        let bins = PairBins::new(xs, width, max_lag);
        hs.iter().map(|&h| bins.score(h)).collect()
    };
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty candidates");
    let flag = if hs.len() > 1 && best == 0 {
        Some(BandwidthFlag::SmallestCandidate)
    } else if hs.len() > 1 && best == hs.len() - 1 {
        Some(BandwidthFlag::LargestCandidate)
    } else {
        None
    };
    Ok(BandwidthChoice {
        bandwidth: hs[best],
        score: scores[best],
        flag,
    })
}
