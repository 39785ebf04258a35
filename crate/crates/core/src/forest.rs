//! Bootstrap ensembles of partitioning trees, out-of-bag score aggregation
//! and the dependence coefficient.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank_space::{rank_training_sample, RawSample};
use crate::tree::{train_ranked, ClassWeight, SplitCriterion, TreeConfig};

/// Smallest sample accepted by [`ucorr`].
pub const MIN_SAMPLE_SIZE: usize = 10;

const DEFAULT_SUBSET_CAP: usize = 2000;
const LEAF_CAP: usize = 64;

/// Stream reserved for drawing the permuted subset; tree `z` uses stream `z + 1`.
const SUBSET_STREAM: u64 = 0;

/// Counter-based generator: the same `(seed, stream)` always yields the same
/// sequence, independent of which thread asks for it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `index` into `seed` (splitmix64 finaliser) for independent replicate seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    /// Fraction of trees (taken from the front) grown with semi-random splits.
    pub random_split_fraction: f64,
    /// Permuted subset size; `None` means `min(2000, n(n-1))`.
    pub subset_size: Option<usize>,
    /// Leaf budget per tree; `None` means `min(ceil(sqrt(n)), 64)`.
    pub max_leaf_count: Option<usize>,
    /// Minimum leaf width in ranks; `None` means `ceil(0.03 n)`.
    pub min_leaf_width: Option<u32>,
    pub split_trials: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            random_split_fraction: 0.5,
            subset_size: None,
            max_leaf_count: None,
            min_leaf_width: None,
            split_trials: 10,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn subset_size_for(&self, n: usize) -> usize {
        self.subset_size
            .unwrap_or_else(|| DEFAULT_SUBSET_CAP.min(n * (n - 1)))
    }

    pub fn leaf_count_for(&self, n: usize) -> usize {
        self.max_leaf_count
            .unwrap_or_else(|| ((n as f64).sqrt().ceil() as usize).min(LEAF_CAP))
    }

    pub fn min_leaf_width_for(&self, n: usize) -> u32 {
        // Integer form of ceil(0.03 n), avoiding 0.03 * 100 = 3.0000000000000004.
        self.min_leaf_width
            .unwrap_or_else(|| (3 * n).div_ceil(100).max(1) as u32)
    }

    pub fn random_tree_count(&self) -> usize {
        (self.random_split_fraction * self.tree_count as f64).floor() as usize
    }

    pub fn tree_config(&self, n: usize, tree_index: usize) -> TreeConfig {
        TreeConfig {
            max_leaf_count: self.leaf_count_for(n),
            split_trial_count: self.split_trials,
            min_leaf_width: self.min_leaf_width_for(n),
            weight: ClassWeight::for_sample_size(n),
            criterion: if tree_index < self.random_tree_count() {
                SplitCriterion::SemiRandom
            } else {
                SplitCriterion::GiniGain
            },
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::InvalidConfig("tree_count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.random_split_fraction) {
            return Err(Error::InvalidConfig(
                "random_split_fraction must lie in [0, 1]".into(),
            ));
        }
        let available = n * (n - 1);
        let m = self.subset_size_for(n);
        if m == 0 {
            return Err(Error::InvalidConfig("subset size must be >= 1".into()));
        }
        if m > available {
            return Err(Error::SubsetTooLarge { m, available });
        }
        self.tree_config(n, 0).validate()
    }
}

/// One bootstrap draw with its in-bag membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bootstrap {
    pub indices: Vec<usize>,
    pub in_bag: Vec<bool>,
}

impl Bootstrap {
    pub fn distinct_count(&self) -> usize {
        self.in_bag.iter().filter(|&&b| b).count()
    }
}

pub fn bootstrap_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Bootstrap {
    let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut in_bag = vec![false; n];
    for &i in &indices {
        in_bag[i] = true;
    }
    Bootstrap { indices, in_bag }
}

/// Distinct off-diagonal index pairs `(i, j)`, read as the example `(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutedSubset {
    pairs: Vec<(u32, u32)>,
}

impl PermutedSubset {
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn sample_permuted_subset<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<PermutedSubset> {
    let available = n * n.saturating_sub(1);
    if m > available {
        return Err(Error::SubsetTooLarge { m, available });
    }
    let pairs = index::sample(rng, available, m)
        .into_iter()
        .map(|k| {
            let i = k / (n - 1);
            let r = k % (n - 1);
            let j = if r >= i { r + 1 } else { r };
            (i as u32, j as u32)
        })
        .collect();
    Ok(PermutedSubset { pairs })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreAccumulator {
    pub score_sum: f64,
    pub eligible_trees: u32,
}

impl ScoreAccumulator {
    /// Aggregate out-of-bag score, if any tree could score the example.
    pub fn mean(&self) -> Option<f64> {
        (self.eligible_trees > 0).then(|| self.score_sum / f64::from(self.eligible_trees))
    }
}

/// Aggregate out-of-bag scores for observed examples and the permuted subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub observed: Vec<ScoreAccumulator>,
    pub permuted: Vec<ScoreAccumulator>,
}

impl ScoreTable {
    fn zeros(n: usize, m: usize) -> Self {
        Self {
            observed: vec![ScoreAccumulator::default(); n],
            permuted: vec![ScoreAccumulator::default(); m],
        }
    }

    pub fn observed_scores(&self) -> Vec<Option<f64>> {
        self.observed.iter().map(ScoreAccumulator::mean).collect()
    }

    pub fn permuted_scores(&self) -> Vec<Option<f64>> {
        self.permuted.iter().map(ScoreAccumulator::mean).collect()
    }

    fn absorb(&mut self, scores: &TreeScores) {
        for (acc, s) in self.observed.iter_mut().zip(&scores.observed) {
            if let Some(s) = s {
                acc.score_sum += s;
                acc.eligible_trees += 1;
            }
        }
        for (acc, s) in self.permuted.iter_mut().zip(&scores.permuted) {
            if let Some(s) = s {
                acc.score_sum += s;
                acc.eligible_trees += 1;
            }
        }
    }
}

struct TreeScores {
    observed: Vec<Option<f64>>,
    permuted: Vec<Option<f64>>,
}

fn score_with_tree(
    sample: &RawSample,
    subset: &PermutedSubset,
    config: &ForestConfig,
    tree_index: usize,
) -> Result<TreeScores> {
    let n = sample.len();
    let mut rng = stream_rng(config.seed, tree_index as u64 + 1);
    let boot = bootstrap_indices(n, &mut rng);
    let train = sample.select(&boot.indices);
    let ranked = rank_training_sample(&train)?;
    let tree = train_ranked(&train, &ranked, &config.tree_config(n, tree_index), &mut rng)?;

    let (map_x, map_y) = tree.rank_maps();
    let qx: Vec<u32> = sample.xs().iter().map(|&v| map_x.query_rank(v)).collect();
    let qy: Vec<u32> = sample.ys().iter().map(|&v| map_y.query_rank(v)).collect();
    let oob = |i: usize| !boot.in_bag[i];

    let observed = (0..n)
        .map(|i| oob(i).then(|| tree.score_ranks(qx[i], qy[i])))
        .collect();
    let permuted = subset
        .pairs()
        .iter()
        .map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            (oob(i) || oob(j)).then(|| tree.score_ranks(qx[i], qy[j]))
        })
        .collect();
    Ok(TreeScores { observed, permuted })
}

/// Trains every tree and accumulates out-of-bag scores.
///
/// Trees run in parallel; their contributions are summed in tree order, so
/// the table does not depend on the thread count.
pub fn aggregate_scores(
    sample: &RawSample,
    subset: &PermutedSubset,
    config: &ForestConfig,
) -> Result<ScoreTable> {
    config.validate(sample.len())?;
    let per_tree: Vec<TreeScores> = (0..config.tree_count)
        .into_par_iter()
        .map(|z| score_with_tree(sample, subset, config, z))
        .collect::<Result<_>>()?;
    let mut table = ScoreTable::zeros(sample.len(), subset.len());
    for scores in &per_tree {
        table.absorb(scores);
    }
    Ok(table)
}

/// Sign of the comparison: +1, 0 or -1.
pub fn q_compare(v1: f64, v2: f64) -> i8 {
    match v1.partial_cmp(&v2) {
        Some(std::cmp::Ordering::Greater) => 1,
        Some(std::cmp::Ordering::Less) => -1,
        _ => 0,
    }
}

/// Concordance between observed and permuted aggregate scores, in `[-1, 1]`.
///
/// Unscored examples count as ties; the denominator is always `n * m`.
pub fn compute_rho(table: &ScoreTable, n: usize, m: usize) -> f64 {
    let mut permuted: Vec<f64> = table.permuted.iter().filter_map(|a| a.mean()).collect();
    permuted.sort_unstable_by(f64::total_cmp);
    let total: i64 = table
        .observed
        .iter()
        .filter_map(|a| a.mean())
        .map(|s| {
            let below = permuted.partition_point(|&p| p < s);
            let above = permuted.len() - permuted.partition_point(|&p| p <= s);
            below as i64 - above as i64
        })
        .sum();
    total as f64 / (n as f64 * m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcorrOutput {
    pub rho: f64,
    pub n: usize,
    pub m: usize,
    pub subset: PermutedSubset,
    pub table: ScoreTable,
}

/// Computes the coefficient end to end.
pub fn ucorr(sample: &RawSample, config: &ForestConfig) -> Result<UcorrOutput> {
    let n = sample.len();
    if n < MIN_SAMPLE_SIZE {
        return Err(Error::TooSmall {
            n,
            reason: "at least 10 observations are needed for the large-sample \
                     approximation (assumption A2: n, m > 8)",
        });
    }
    config.validate(n)?;
    let m = config.subset_size_for(n);
    let subset = sample_permuted_subset(n, m, &mut stream_rng(config.seed, SUBSET_STREAM))?;
    let table = aggregate_scores(sample, &subset, config)?;
    let rho = compute_rho(&table, n, m);
    Ok(UcorrOutput {
        rho,
        n,
        m,
        subset,
        table,
    })
}
