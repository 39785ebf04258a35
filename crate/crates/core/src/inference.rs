//! Null distribution of the coefficient and the p-values built on it.


use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{compute_rho, derive_seed, stream_rng, ucorr, ForestConfig, ScoreTable};
use crate::rank_space::RawSample;

/// Variance inflation for locally correlated scores.
pub const DEFAULT_K_BIAS: f64 = 0.5;

/// Standard normal upper tail `1 - Phi(z)`, via `erfc` (accurate to ~1e-16
/// relative, also deep in the tail).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Null variance of the coefficient: `(1 + n + m (1 + k)) / (3 n m)`.
pub fn null_variance(n: usize, m: usize, k_bias: f64) -> Result<f64> {
    if n <= 8 || m <= 8 {
        return Err(Error::TooSmall {
            n: n.min(m),
            reason: "the normal approximation needs n > 8 and m > 8 (assumption A2)",
        });
    }
    if !(k_bias.is_finite() && k_bias > -1.0) {
        return Err(Error::InvalidConfig(format!("k_bias must be > -1, got {k_bias}")));
    }
    let (n, m) = (n as f64, m as f64);
    Ok((1.0 + n + m * (1.0 + k_bias)) / (3.0 * n * m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullParams {
    pub n: usize,
    pub m: usize,
    pub k_bias: f64,
    pub sigma0: f64,
}

impl NullParams {
    pub fn new(n: usize, m: usize, k_bias: f64) -> Result<Self> {
        let sigma0 = null_variance(n, m, k_bias)?.sqrt();
        Ok(Self {
            n,
            m,
            k_bias,
            sigma0,
        })
    }
}

/// One-sided (upper tail) p-value under the normal null.
pub fn p_value_analytic(rho: f64, params: &NullParams) -> f64 {
    normal_sf(rho / params.sigma0)
}

/// `(1 + #{null >= observed}) / (len + 1)`.
pub fn empirical_p_value(observed: f64, null: &[f64]) -> f64 {
    let at_least = null.iter().filter(|&&r| r >= observed).count();
    (1 + at_least) as f64 / (null.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub observed_rho: f64,
    pub null_rhos: Vec<f64>,
    pub p_value: f64,
}

/// Minimum number of permutations for [`p_value_permutation`].
pub const MIN_PERMUTATIONS: usize = 19;

/// Null coefficients from `n_perms` copies of `sample` with y shuffled
/// against x. Replicate `r` shuffles with, and grows its forest from, a seed
/// derived from `(seed, r)`.
pub fn permutation_null(
    sample: &RawSample,
    config: &ForestConfig,
    n_perms: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..n_perms as u64)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r);
            let mut ys = sample.ys().to_vec();
            ys.shuffle(&mut stream_rng(rep_seed, u64::MAX));
            let shuffled = sample.with_ys(ys);
            Ok(ucorr(&shuffled, &config.with_seed(rep_seed))?.rho)
        })
        .collect()
}

pub fn p_value_permutation(
    sample: &RawSample,
    config: &ForestConfig,
    n_perms: usize,
    seed: u64,
) -> Result<PermutationOutcome> {
    if n_perms < MIN_PERMUTATIONS {
        return Err(Error::InvalidConfig(format!(
            "at least {MIN_PERMUTATIONS} permutations are required, got {n_perms}"
        )));
    }
    let observed_rho = ucorr(sample, config)?.rho;
    let null_rhos = permutation_null(sample, config, n_perms, seed)?;
    let p_value = empirical_p_value(observed_rho, &null_rhos);
    Ok(PermutationOutcome {
        observed_rho,
        null_rhos,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs where the observed score wins, ties counting one half.
    pub u: f64,
    pub n_observed: usize,
    pub n_permuted: usize,
    pub z: f64,
    pub p_value: f64,
    /// Every score tied, so the statistic carries no information.
    pub degenerate: bool,
}

/// Mann-Whitney U test of observed scores against permuted scores,
/// one-sided for observed stochastically larger. Normal approximation with
/// tie-corrected variance; unscored examples are left out.
pub fn mann_whitney_test(table: &ScoreTable) -> Result<MannWhitney> {
    let obs: Vec<f64> = table.observed_scores().into_iter().flatten().collect();
    let perm: Vec<f64> = table.permuted_scores().into_iter().flatten().collect();
    mann_whitney(&obs, &perm)
}

pub fn mann_whitney(observed: &[f64], permuted: &[f64]) -> Result<MannWhitney> {
    let (n1, n2) = (observed.len(), permuted.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Empty);
    }
    let mut pooled: Vec<(f64, bool)> = observed
        .iter()
        .map(|&v| (v, true))
        .chain(permuted.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Midranks; tie term sum(t^3 - t).
    let total = pooled.len();
    let mut rank_sum = 0.0;
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < total {
        let mut end = start;
        while end < total && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let t = (end - start) as f64;
        let midrank = (start + end + 1) as f64 / 2.0;
        let in_group = pooled[start..end].iter().filter(|p| p.1).count();
        rank_sum += midrank * in_group as f64;
        tie_term += t * t * t - t;
        start = end;
    }

    let (f1, f2, nn) = (n1 as f64, n2 as f64, total as f64);
    let u = rank_sum - f1 * (f1 + 1.0) / 2.0;
    let variance = if total > 1 {
        f1 * f2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)))
    } else {
        0.0
    };
    if variance <= 0.0 {
        return Ok(MannWhitney {
            u,
            n_observed: n1,
            n_permuted: n2,
            z: 0.0,
            p_value: 0.5,
            degenerate: true,
        });
    }
    let z = (u - f1 * f2 / 2.0) / variance.sqrt();
    Ok(MannWhitney {
        u,
        n_observed: n1,
        n_permuted: n2,
        z,
        p_value: normal_sf(z),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Analytic,
    Permutation,
    MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub rho: f64,
    pub sigma0: f64,
    /// `rho / sigma0`, except for Mann-Whitney where it is the U z-score.
    pub z: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    pub n: usize,
    pub m: usize,
    pub k_bias: f64,
    pub degenerate: bool,
    pub config: ForestConfig,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub method: PValueMethod,
    pub k_bias: f64,
    pub permutations: usize,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            method: PValueMethod::Analytic,
            k_bias: DEFAULT_K_BIAS,
            permutations: 99,
        }
    }
}

// No monotonic clock on bare wasm32; timing is reported as zero there.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn stopwatch() -> impl Fn() -> u64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_millis() as u64
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn stopwatch() -> impl Fn() -> u64 {
    || 0
}

/// Computes the coefficient and a one-sided p-value for independence.
pub fn test_independence(
    sample: &RawSample,
    config: &ForestConfig,
    options: &TestOptions,
) -> Result<TestResult> {
    let elapsed_ms = stopwatch();
    let out = ucorr(sample, config)?;
    let params = NullParams::new(out.n, out.m, options.k_bias)?;
    let z = out.rho / params.sigma0;
    let (z, p_value, degenerate) = match options.method {
        PValueMethod::Analytic => (z, p_value_analytic(out.rho, &params), false),
        PValueMethod::Permutation => {
            if options.permutations < MIN_PERMUTATIONS {
                return Err(Error::InvalidConfig(format!(
                    "at least {MIN_PERMUTATIONS} permutations are required"
                )));
            }
            let null = permutation_null(sample, config, options.permutations, config.seed)?;
            (z, empirical_p_value(out.rho, &null), false)
        }
        PValueMethod::MannWhitney => {
            let mw = mann_whitney_test(&out.table)?;
            (mw.z, mw.p_value, mw.degenerate)
        }
    };
    debug_assert_eq!(out.rho, compute_rho(&out.table, out.n, out.m));
    Ok(TestResult {
        rho: out.rho,
        sigma0: params.sigma0,
        z,
        p_value,
        method: options.method,
        n: out.n,
        m: out.m,
        k_bias: options.k_bias,
        degenerate,
        config: *config,
        elapsed_ms: elapsed_ms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ScoreAccumulator;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_u(a: &[f64], b: &[f64]) -> f64 {
        let mut u = 0.0;
        for &x in a {
            for &y in b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    }

    #[test]
    fn variance_reduces_to_mann_whitney() {
        let v = null_variance(50, 400, 0.0).unwrap();
        assert_eq!(v, (1.0 + 50.0 + 400.0) / (3.0 * 50.0 * 400.0));
    }

    #[test]
    fn variance_reference_values() {
        let v = null_variance(200, 2000, 0.5).unwrap();
        assert!((v - 3201.0 / 1_200_000.0).abs() < 1e-15);
        assert!((v.sqrt() - 0.0516).abs() < 5e-5);
        let s = null_variance(300, 2000, 0.5).unwrap().sqrt();
        assert!((s - 0.0428).abs() < 5e-5, "{s}");
    }

    #[test]
    fn variance_requires_large_samples() {
        assert!(null_variance(8, 100, 0.5).is_err());
        assert!(null_variance(100, 8, 0.5).is_err());
        assert!(null_variance(9, 9, 0.5).is_ok());
    }

    #[test]
    fn variance_decreases() {
        for n in [9usize, 20, 200] {
            for m in [9usize, 50, 2000] {
                let v = null_variance(n, m, 0.5).unwrap();
                assert!(v > 0.0);
                assert!(null_variance(n + 1, m, 0.5).unwrap() < v);
                assert!(null_variance(n, m + 1, 0.5).unwrap() < v);
            }
        }
    }

    #[test]
    fn analytic_p_values() {
        let params = NullParams::new(200, 2000, 0.5).unwrap();
        assert_eq!(p_value_analytic(0.0, &params), 0.5);
        assert!((p_value_analytic(params.sigma0, &params) - 0.158_655_253_931_457).abs() < 1e-7);
        assert!((p_value_analytic(-params.sigma0, &params) - 0.841_344_746_068_543).abs() < 1e-7);
        // deep tail stays positive
        assert!(normal_sf(10.0) > 0.0 && normal_sf(10.0) < 1e-22);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn empirical_p_extremes() {
        let null: Vec<f64> = (0..99).map(|i| i as f64 / 100.0).collect();
        assert_eq!(empirical_p_value(5.0, &null), 0.01);
        assert_eq!(empirical_p_value(-5.0, &null), 1.0);
        let p = empirical_p_value(0.49, &null);
        assert!((p - 0.5).abs() < 0.02, "{p}");
    }

    #[test]
    fn permutation_needs_enough_replicates() {
        let s = RawSample::new((0..20).map(f64::from).collect(), (0..20).map(f64::from).collect())
            .unwrap();
        assert!(p_value_permutation(&s, &ForestConfig::default(), 18, 0).is_err());
    }

    #[test]
    fn permutation_detects_strong_signal() {
        let xs: Vec<f64> = (0..80).map(|i| f64::from(i) / 80.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 12.0).sin()).collect();
        let s = RawSample::new(xs, ys).unwrap();
        let out = p_value_permutation(&s, &ForestConfig::default(), 19, 3).unwrap();
        assert_eq!(out.p_value, 0.05);
        assert!(out.p_value >= 1.0 / 20.0 && out.p_value <= 1.0);
    }

    #[test]
    fn mann_whitney_separation() {
        let a: Vec<f64> = (10..20).map(f64::from).collect();
        let b: Vec<f64> = (0..10).map(f64::from).collect();
        let mw = mann_whitney(&a, &b).unwrap();
        assert_eq!(mw.u, 100.0);
        let reversed = mann_whitney(&b, &a).unwrap();
        assert!(mw.z > 3.7 && (mw.z + reversed.z).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_identical_groups() {
        let a = [0.1, 0.4, 0.4, 0.9];
        let mw = mann_whitney(&a, &a).unwrap();
        assert_eq!(mw.u, 8.0);
        assert_eq!(mw.p_value, 0.5);
        let flat = mann_whitney(&[0.3; 5], &[0.3; 7]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.p_value, 0.5);
    }

    #[test]
    fn mann_whitney_from_table() {
        let acc = |v: f64| ScoreAccumulator {
            score_sum: 2.0 * v,
            eligible_trees: 2,
        };
        let table = ScoreTable {
            observed: vec![acc(0.9), acc(0.7), ScoreAccumulator::default()],
            permuted: vec![acc(0.1), acc(0.7)],
        };
        let mw = mann_whitney_test(&table).unwrap();
        assert_eq!(mw.n_observed, 2);
        assert_eq!(mw.u, brute_u(&[0.9, 0.7], &[0.1, 0.7]));
    }

    proptest! {
        #[test]
        fn mann_whitney_matches_brute_force(
            a in proptest::collection::vec(0u8..12, 1..50),
            b in proptest::collection::vec(0u8..12, 1..50),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            prop_assert_eq!(mann_whitney(&a, &b).unwrap().u, brute_u(&a, &b));
        }

        #[test]
        fn analytic_p_decreases(r1 in -0.5f64..0.5, d in 1e-6f64..0.5) {
            let params = NullParams::new(200, 2000, 0.5).unwrap();
            let (hi, lo) = (p_value_analytic(r1, &params), p_value_analytic(r1 + d, &params));
            prop_assert!(lo <= hi);
            // Far in the lower tail the p-value rounds to exactly 1.
            if r1 > -0.2 {
                prop_assert!(lo < hi);
            }
        }
    }

    #[test]
    fn test_independence_methods() {
        let mut rng = stream_rng(5, 0);
        let xs: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let s = RawSample::new(xs, ys).unwrap();
        let cfg = ForestConfig::default();
        let analytic = test_independence(&s, &cfg, &TestOptions::default()).unwrap();
        assert_eq!(analytic.z, analytic.rho / analytic.sigma0);
        assert!(analytic.p_value < 1e-3);
        let mw = test_independence(
            &s,
            &cfg,
            &TestOptions {
                method: PValueMethod::MannWhitney,
                ..TestOptions::default()
            },
        )
        .unwrap();
        assert_eq!(mw.rho, analytic.rho);
        assert!(mw.p_value < 1e-3);
    }
}
