//! Synthetic relationships, power and null-distribution experiments, and
//! the Pearson/Spearman baselines they are compared against.
//!
//! The generators are representative shapes: `x ~ U[-1, 1]` (or an angle
//! `t ~ U[0, 2pi)` for the circle) with additive uniform noise on
//! `[-s, s]`, `s = noise / 100 * max_scale(kind)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{derive_seed, stream_rng, ucorr, ForestConfig};
use crate::inference::null_variance;
use crate::rank_space::RawSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Independent,
    Linear,
    Parabola,
    Sine,
    Circle,
    Cross,
    Checkerboard,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::Independent,
        RelationKind::Linear,
        RelationKind::Parabola,
        RelationKind::Sine,
        RelationKind::Circle,
        RelationKind::Cross,
        RelationKind::Checkerboard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Independent => "independent",
            RelationKind::Linear => "linear",
            RelationKind::Parabola => "parabola",
            RelationKind::Sine => "sine",
            RelationKind::Circle => "circle",
            RelationKind::Cross => "cross",
            RelationKind::Checkerboard => "checkerboard",
        }
    }

    /// Noise half-width at noise level 100.
    pub fn max_scale(self) -> f64 {
        match self {
            RelationKind::Independent => 0.0,
            RelationKind::Linear => 2.0,
            RelationKind::Parabola => 1.0,
            RelationKind::Sine => 2.0,
            RelationKind::Circle => 1.0,
            RelationKind::Cross => 2.0,
            RelationKind::Checkerboard => 0.5,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown relation '{s}', expected one of: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationshipSpec {
    pub kind: RelationKind,
    pub n: usize,
    /// Noise level on a 0..=100 scale.
    pub noise: f64,
    pub seed: u64,
}

pub fn generate(spec: &RelationshipSpec) -> Result<RawSample> {
    if spec.n == 0 {
        return Err(Error::Empty);
    }
    if !(0.0..=100.0).contains(&spec.noise) {
        return Err(Error::InvalidConfig(format!(
            "noise must lie in [0, 100], got {}",
            spec.noise
        )));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let s = spec.noise / 100.0 * spec.kind.max_scale();
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
        if s > 0.0 {
            rng.random_range(-s..=s)
        } else {
            0.0
        }
    };
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (x, y) = match spec.kind {
            RelationKind::Independent => (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            RelationKind::Linear => {
                let x = rng.random_range(-1.0..1.0);
                (x, x + jitter(&mut rng))
            }
            RelationKind::Parabola => {
                let x: f64 = rng.random_range(-1.0..1.0);
                (x, x * x + jitter(&mut rng))
            }
            RelationKind::Sine => {
                let x: f64 = rng.random_range(-1.0..1.0);
                (x, (4.0 * std::f64::consts::PI * x).sin() + jitter(&mut rng))
            }
            RelationKind::Circle => {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (t.cos() + jitter(&mut rng), t.sin() + jitter(&mut rng))
            }
            RelationKind::Cross => {
                let x = rng.random_range(-1.0..1.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (x, sign * x + jitter(&mut rng))
            }
            RelationKind::Checkerboard => {
                // Uniform over the 8 cells of a 4x4 grid on [-1,1]^2 with even (col + row).
                let cell = rng.random_range(0..8u32);
                let row = cell / 2;
                let col = 2 * (cell % 2) + row % 2;
                let x = -1.0 + 0.5 * f64::from(col) + rng.random_range(0.0..0.5);
                let y = -1.0 + 0.5 * f64::from(row) + rng.random_range(0.0..0.5);
                (x + jitter(&mut rng), y + jitter(&mut rng))
            }
        };
        xs.push(x);
        ys.push(y);
    }
    RawSample::new(xs, ys)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_baseline_input(sample: &RawSample) -> Result<()> {
    if sample.len() < 3 {
        return Err(Error::TooSmall {
            n: sample.len(),
            reason: "correlation needs at least 3 observations",
        });
    }
    Ok(())
}

fn product_moment(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance { axis: "x" });
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance { axis: "y" });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(sample: &RawSample) -> Result<f64> {
    check_baseline_input(sample)?;
    product_moment(sample.xs(), sample.ys())
}

/// Ascending ranks, ties share their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman(sample: &RawSample) -> Result<f64> {
    check_baseline_input(sample)?;
    product_moment(&midranks(sample.xs()), &midranks(sample.ys()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    UCorr,
    Pearson,
    Spearman,
}

impl Coefficient {
    pub fn name(self) -> &'static str {
        match self {
            Coefficient::UCorr => "ucorr",
            Coefficient::Pearson => "pearson",
            Coefficient::Spearman => "spearman",
        }
    }

    pub fn compute(self, sample: &RawSample, forest: &ForestConfig) -> Result<f64> {
        match self {
            Coefficient::UCorr => Ok(ucorr(sample, forest)?.rho),
            Coefficient::Pearson => pearson(sample),
            Coefficient::Spearman => spearman(sample),
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Coefficient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ucorr" => Ok(Coefficient::UCorr),
            "pearson" => Ok(Coefficient::Pearson),
            "spearman" => Ok(Coefficient::Spearman),
            other => Err(Error::InvalidConfig(format!(
                "unknown coefficient '{other}', expected ucorr, pearson or spearman"
            ))),
        }
    }
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub kind: RelationKind,
    pub coefficient: Coefficient,
    pub noise: f64,
    pub reps: usize,
    pub null_quantile_95: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub points: Vec<PowerPoint>,
}

pub const MIN_POWER_REPS: usize = 50;

/// Power of `coefficient` to detect `kind` at each noise level.
///
/// Per noise level: `reps` fresh datasets with y shuffled give the null
/// 95% quantile; `reps` further datasets give the fraction of alternative
/// coefficients strictly above it.
pub fn power_experiment(
    kind: RelationKind,
    n: usize,
    noise_grid: &[f64],
    reps: usize,
    coefficient: Coefficient,
    forest: &ForestConfig,
    seed: u64,
) -> Result<PowerResult> {
    if reps < MIN_POWER_REPS {
        return Err(Error::InvalidConfig(format!(
            "power needs at least {MIN_POWER_REPS} replicates, got {reps}"
        )));
    }
    let points = noise_grid
        .iter()
        .enumerate()
        .map(|(level, &noise)| {
            let level_seed = derive_seed(seed, level as u64);
            let run = |rep: usize, permute: bool| -> Result<f64> {
                let rep_seed = derive_seed(level_seed, (2 * rep + usize::from(permute)) as u64);
                let mut sample = generate(&RelationshipSpec {
                    kind,
                    n,
                    noise,
                    seed: rep_seed,
                })?;
                if permute {
                    let mut ys = sample.ys().to_vec();
                    ys.shuffle(&mut stream_rng(rep_seed, 1));
                    sample = sample.with_ys(ys);
                }
                coefficient.compute(&sample, &forest.with_seed(rep_seed))
            };
            let null: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| run(r, true))
                .collect::<Result<_>>()?;
            let alt: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| run(r, false))
                .collect::<Result<_>>()?;
            let q95 = quantile(&null, 0.95);
            let hits = alt.iter().filter(|&&v| v > q95).count();
            Ok(PowerPoint {
                kind,
                coefficient,
                noise,
                reps,
                null_quantile_95: q95,
                power: hits as f64 / reps as f64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PowerResult { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Empirical density (count / (reps * width)).
    pub density: f64,
    /// Normal density with the predicted sigma at the bin centre.
    pub predicted_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistSummary {
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub predicted_sigma: f64,
    pub rhos: Vec<f64>,
    pub bins: Vec<HistogramBin>,
}

pub const MIN_NULL_REPS: usize = 200;

/// Coefficients on `reps` independent uniform samples, summarised against
/// the normal null with variance inflation `k_bias`.
pub fn null_dist_experiment(
    n: usize,
    m: usize,
    reps: usize,
    bin_count: usize,
    k_bias: f64,
    forest: &ForestConfig,
    seed: u64,
) -> Result<NullDistSummary> {
    if reps < MIN_NULL_REPS {
        return Err(Error::InvalidConfig(format!(
            "null distribution needs at least {MIN_NULL_REPS} replicates, got {reps}"
        )));
    }
    if bin_count == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1".into()));
    }
    let predicted_sigma = null_variance(n, m, k_bias)?.sqrt();
    let config = ForestConfig {
        subset_size: Some(m),
        ..*forest
    };
    let rhos: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r);
            let sample = generate(&RelationshipSpec {
                kind: RelationKind::Independent,
                n,
                noise: 0.0,
                seed: rep_seed,
            })?;
            Ok(ucorr(&sample, &config.with_seed(rep_seed))?.rho)
        })
        .collect::<Result<_>>()?;

    let mu = mean(&rhos);
    let std = (rhos.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    let mut sorted = rhos.clone();
    sorted.sort_unstable_by(f64::total_cmp);

    // Bins span +-5 predicted sigmas, widened to cover every observation.
    let lo = sorted[0].min(-5.0 * predicted_sigma);
    let hi = sorted[reps - 1].max(5.0 * predicted_sigma);
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for &r in &rhos {
        let b = (((r - lo) / width) as usize).min(bin_count - 1);
        counts[b] += 1;
    }
    let norm = 1.0 / (predicted_sigma * (2.0 * std::f64::consts::PI).sqrt());
    let bins = counts
        .iter()
        .enumerate()
        .map(|(b, &count)| {
            let (blo, bhi) = (lo + b as f64 * width, lo + (b + 1) as f64 * width);
            let centre = 0.5 * (blo + bhi) / predicted_sigma;
            HistogramBin {
                lo: blo,
                hi: bhi,
                count,
                density: count as f64 / (reps as f64 * width),
                predicted_density: norm * (-0.5 * centre * centre).exp(),
            }
        })
        .collect();

    Ok(NullDistSummary {
        n,
        m,
        reps,
        mean: mu,
        std,
        q05: quantile_sorted(&sorted, 0.05),
        q50: quantile_sorted(&sorted, 0.5),
        q95: quantile_sorted(&sorted, 0.95),
        predicted_sigma,
        rhos,
        bins,
    })
}
