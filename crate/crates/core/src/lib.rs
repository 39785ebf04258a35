//! Dependence testing by discriminating a bivariate sample from its
//! permuted counterpart.
//!
//! A forest of second-order partitioning trees learns to tell observed
//! pairs `(x_i, y_i)` apart from cross pairs `(x_i, y_j)`. The coefficient
//! is the concordance of out-of-bag scores between the two groups: close to
//! 0 under independence, positive when the trees generalise.
//!
//! ```
//! use ucorr::{ucorr, ForestConfig, RawSample};
//!
//! let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0 - 1.0).collect();
//! let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
//! let sample = RawSample::new(xs, ys).unwrap();
//! let out = ucorr(&sample, &ForestConfig::default()).unwrap();
//! assert!(out.rho > 0.5);
//! ```

pub mod error;
pub mod forest;
pub mod inference;
pub mod rank_space;
pub mod simulate;
pub mod tree;

pub use error::{Error, Result};
pub use forest::{
    aggregate_scores, bootstrap_indices, compute_rho, sample_permuted_subset, ucorr, ForestConfig,
    PermutedSubset, ScoreTable, UcorrOutput,
};
pub use inference::{
    mann_whitney_test, null_variance, p_value_analytic, p_value_permutation, test_independence,
    NullParams, PValueMethod, TestOptions, TestResult,
};
pub use rank_space::{build_rank_map, rank_training_sample, RankMap, RankedSample, RawSample, Rect};
pub use simulate::{generate, pearson, spearman, Coefficient, RelationKind, RelationshipSpec};
pub use tree::{train_tree, DecisionTree, SplitCriterion, SplitWay, TreeConfig};
