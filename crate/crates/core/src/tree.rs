//! Second-order partitioning decision trees.
//!
//! A tree separates the ranked observed sample from the virtual permuted
//! sample `{(rx_i, ry_j)}`. Nodes are rank rectangles; a split point `(a, b)`
//! cuts a rectangle into up to four quadrants and each [`SplitWay`] groups
//! those quadrants into 2, 3 or 4 rectangular parts. Permuted counts come
//! from rectangle areas, so the permuted sample is never built.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank_space::{permuted_count, RankMap, RankedSample, RawSample, Rect};

// Quadrant bits. "Left" is rx <= a, "low" is ry <= b.
const LL: u8 = 1;
const RL: u8 = 2;
const LU: u8 = 4;
const RU: u8 = 8;
const QUADRANTS: [u8; 4] = [LL, RL, LU, RU];

/// The seven ways a split point can partition a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitWay {
    /// Full cut at `a`.
    Vertical,
    /// Full cut at `b`.
    Horizontal,
    /// Four quadrants around `(a, b)`.
    Quad,
    /// Full cut at `a`, left half cut again at `b`.
    TLeft,
    /// Full cut at `a`, right half cut again at `b`.
    TRight,
    /// Full cut at `b`, bottom half cut again at `a`.
    TBottom,
    /// Full cut at `b`, top half cut again at `a`.
    TTop,
}

impl SplitWay {
    pub const ALL: [SplitWay; 7] = [
        SplitWay::Vertical,
        SplitWay::Horizontal,
        SplitWay::Quad,
        SplitWay::TLeft,
        SplitWay::TRight,
        SplitWay::TBottom,
        SplitWay::TTop,
    ];

    /// Each part as a set of quadrant bits.
    fn groups(self) -> &'static [u8] {
        match self {
            SplitWay::Vertical => &[LL | LU, RL | RU],
            SplitWay::Horizontal => &[LL | RL, LU | RU],
            SplitWay::Quad => &[LL, RL, LU, RU],
            SplitWay::TLeft => &[LL, LU, RL | RU],
            SplitWay::TRight => &[LL | LU, RL, RU],
            SplitWay::TBottom => &[LL, RL, LU | RU],
            SplitWay::TTop => &[LL | RL, LU, RU],
        }
    }

    pub fn part_count(self) -> usize {
        self.groups().len()
    }

    /// Rectangles produced by cutting `rect` at `point`.
    pub fn parts(self, rect: &Rect, point: SplitPoint) -> Vec<Rect> {
        self.groups()
            .iter()
            .map(|&mask| group_rect(rect, point, mask))
            .collect()
    }
}

/// Rank coordinates of a split. A coordinate is only meaningful for the ways
/// that cut along its axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub a: u32,
    pub b: u32,
}

fn group_rect(rect: &Rect, point: SplitPoint, mask: u8) -> Rect {
    let has_left = mask & (LL | LU) != 0;
    let has_right = mask & (RL | RU) != 0;
    let has_low = mask & (LL | RL) != 0;
    let has_up = mask & (LU | RU) != 0;
    Rect {
        x_lo: if has_left { rect.x_lo } else { point.a },
        x_hi: if has_right { rect.x_hi } else { point.a },
        y_lo: if has_low { rect.y_lo } else { point.b },
        y_hi: if has_up { rect.y_hi } else { point.b },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub point: SplitPoint,
    pub way: SplitWay,
    pub gain: f64,
}

/// Weight of the permuted class, stored as its reciprocal so that the
/// default `omega = 1/n` stays exact in integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeight {
    inverse: f64,
}

impl ClassWeight {
    /// `omega = 1/n`.
    pub fn for_sample_size(n: usize) -> Self {
        Self { inverse: n as f64 }
    }

    pub fn from_omega(omega: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidConfig(format!("omega must be > 0, got {omega}")));
        }
        Ok(Self {
            inverse: 1.0 / omega,
        })
    }

    pub fn omega(&self) -> f64 {
        1.0 / self.inverse
    }

    /// `|D|_w * L(D)`, i.e. `2 nA (w nB) / (nA + w nB)`.
    fn impurity_mass(&self, n_obs: u64, n_perm: u64) -> f64 {
        if n_obs == 0 || n_perm == 0 {
            return 0.0;
        }
        let (a, b) = (n_obs as f64, n_perm as f64);
        2.0 * a * b / (self.inverse * a + b)
    }

    /// `|D|_w = nA + w nB`.
    pub fn weighted_size(&self, n_obs: u64, n_perm: u64) -> f64 {
        n_obs as f64 + n_perm as f64 / self.inverse
    }

    /// Relative density of observed examples: `nA / (nA + w nB)`.
    pub fn label(&self, n_obs: u64, n_perm: u64) -> f64 {
        if n_obs == 0 {
            return 0.0;
        }
        let a = self.inverse * n_obs as f64;
        a / (a + n_perm as f64)
    }
}

/// Weighted two-class Gini impurity, in `[0, 0.5]`. An empty set has impurity 0.
pub fn gini_impurity(n_obs: u64, n_perm: u64, omega: f64) -> f64 {
    let a = n_obs as f64;
    let b = omega * n_perm as f64;
    let w = a + b;
    if w == 0.0 {
        return 0.0;
    }
    2.0 * (a / w) * (b / w)
}

/// Penalised impurity reduction of splitting `rect` per `cand`, counting
/// observed examples by scanning `ranked`.
pub fn delta_gini(
    rect: &Rect,
    cand: &SplitCandidate,
    ranked: &RankedSample,
    weight: ClassWeight,
) -> f64 {
    let parent = weight.impurity_mass(ranked.observed_count(rect) as u64, permuted_count(rect));
    let children: f64 = cand
        .way
        .parts(rect, cand.point)
        .iter()
        .map(|part| weight.impurity_mass(ranked.observed_count(part) as u64, permuted_count(part)))
        .sum();
    penalty(cand.way.part_count()) * (parent - children)
}

fn penalty(parts: usize) -> f64 {
    2.0 / parts as f64
}

/// `(2/|parts|) * gamma * sqrt(|D|_w)`.
pub fn semi_random_gain(parts: usize, weighted_size: f64, gamma: f64) -> f64 {
    penalty(parts) * gamma * weighted_size.sqrt()
}

/// Semi-random split score with `gamma ~ U[0, 1]` drawn from `rng`.
pub fn delta_rand<R: Rng + ?Sized>(parts: usize, weighted_size: f64, rng: &mut R) -> f64 {
    let gamma: f64 = rng.random();
    semi_random_gain(parts, weighted_size, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    GiniGain,
    SemiRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_leaf_count: usize,
    pub split_trial_count: usize,
    /// Minimum leaf width in rank units, applied to both axes.
    pub min_leaf_width: u32,
    pub weight: ClassWeight,
    pub criterion: SplitCriterion,
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_leaf_count < 2 {
            return Err(Error::InvalidConfig("max_leaf_count must be >= 2".into()));
        }
        if self.split_trial_count == 0 {
            return Err(Error::InvalidConfig("split_trial_count must be >= 1".into()));
        }
        if self.min_leaf_width == 0 {
            return Err(Error::InvalidConfig("min_leaf_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws `trial_count` split points inside `rect` and scores every legal way
/// of splitting at each of them.
///
/// `members` lists the indices of the observed examples inside `rect`.
/// Candidates whose parts are narrower than `min_leaf_width` on either axis
/// are dropped; an empty result means the leaf cannot be split.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_candidates<R: Rng + ?Sized>(
    rect: &Rect,
    members: &[u32],
    ranked: &RankedSample,
    trial_count: usize,
    min_leaf_width: u32,
    criterion: SplitCriterion,
    weight: ClassWeight,
    rng: &mut R,
) -> Vec<SplitCandidate> {
    let cut_range = |lo: u32, hi: u32| {
        let (first, last) = (lo + min_leaf_width, hi.saturating_sub(min_leaf_width));
        (first <= last).then_some((first, last))
    };
    let x_range = cut_range(rect.x_lo, rect.x_hi);
    let y_range = cut_range(rect.y_lo, rect.y_hi);
    if x_range.is_none() && y_range.is_none() {
        return Vec::new();
    }

    let n_obs = members.len() as u64;
    let parent_mass = weight.impurity_mass(n_obs, permuted_count(rect));
    let parent_size = weight.weighted_size(n_obs, permuted_count(rect));
    let (rx, ry) = (ranked.rx(), ranked.ry());

    let mut out = Vec::with_capacity(trial_count * SplitWay::ALL.len());
    for _ in 0..trial_count {
        // An axis that cannot be cut gets a = x_hi (or b = y_hi), which
        // leaves the far side empty so every way cutting that axis is dropped.
        let a = x_range.map_or(rect.x_hi, |(lo, hi)| rng.random_range(lo..=hi));
        let b = y_range.map_or(rect.y_hi, |(lo, hi)| rng.random_range(lo..=hi));
        let point = SplitPoint { a, b };

        let mut obs = [0u64; 4];
        for &i in members {
            let i = i as usize;
            let right = (rx[i] > a) as usize;
            let up = (ry[i] > b) as usize;
            obs[right | (up << 1)] += 1;
        }
        let (wl, wr) = (u64::from(a - rect.x_lo), u64::from(rect.x_hi - a));
        let (hl, hu) = (u64::from(b - rect.y_lo), u64::from(rect.y_hi - b));
        let perm = [wl * hl, wr * hl, wl * hu, wr * hu];

        for way in SplitWay::ALL {
            let groups = way.groups();
            let legal = groups.iter().all(|&mask| {
                let part = group_rect(rect, point, mask);
                part.x_hi >= part.x_lo + min_leaf_width && part.y_hi >= part.y_lo + min_leaf_width
            });
            if !legal {
                continue;
            }
            let gain = match criterion {
                SplitCriterion::GiniGain => {
                    let children: f64 = groups
                        .iter()
                        .map(|&mask| {
                            let (o, p) = QUADRANTS.iter().enumerate().fold(
                                (0u64, 0u64),
                                |(o, p), (q, &bit)| {
                                    if mask & bit != 0 {
                                        (o + obs[q], p + perm[q])
                                    } else {
                                        (o, p)
                                    }
                                },
                            );
                            weight.impurity_mass(o, p)
                        })
                        .sum();
                    penalty(groups.len()) * (parent_mass - children)
                }
                SplitCriterion::SemiRandom => delta_rand(groups.len(), parent_size, rng),
            };
            out.push(SplitCandidate { point, way, gain });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub rect: Rect,
    /// Arena indices of the children; empty for leaves.
    pub children: Vec<usize>,
    /// Observed training examples in `rect`, bootstrap duplicates included.
    pub n_obs: u64,
    /// Density label; the tree's score for points landing in this node when it is a leaf.
    pub label: f64,
    pub split: Option<(SplitWay, SplitPoint)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A trained tree together with the rank maps of its training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    rank_x: RankMap,
    rank_y: RankMap,
    criterion: SplitCriterion,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn rank_maps(&self) -> (&RankMap, &RankMap) {
        (&self.rank_x, &self.rank_y)
    }

    pub fn criterion(&self) -> SplitCriterion {
        self.criterion
    }

    /// Sample size the tree was trained on.
    pub fn n(&self) -> u32 {
        self.nodes[0].rect.x_hi
    }

    /// Leaf label at rank coordinates already clamped into `(0, n]`.
    pub fn score_ranks(&self, rx: u32, ry: u32) -> f64 {
        let mut node = &self.nodes[0];
        'descend: while !node.is_leaf() {
            for &c in &node.children {
                let child = &self.nodes[c];
                if child.rect.contains(rx, ry) {
                    node = child;
                    continue 'descend;
                }
            }
            unreachable!("children partition their parent");
        }
        node.label
    }

    pub fn score_point(&self, x: f64, y: f64) -> Result<f64> {
        for (index, value) in [(0, x), (1, y)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(self.score_ranks(self.rank_x.query_rank(x), self.rank_y.query_rank(y)))
    }
}

/// Leaf waiting in the split queue with its best cached candidate.
struct Pending {
    gain: f64,
    created: usize,
    node: usize,
    cand: SplitCandidate,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on gain; earlier-created leaves win ties.
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.created.cmp(&self.created))
    }
}

fn best_candidate(cands: &[SplitCandidate]) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    for c in cands {
        if best.is_none_or(|b| c.gain > b.gain) {
            best = Some(*c);
        }
    }
    best
}

/// Trains a tree on an already ranked sample. Rank maps are taken from
/// `sample`, which must be the raw sample `ranked` was computed from.
pub fn train_ranked<R: Rng + ?Sized>(
    sample: &RawSample,
    ranked: &RankedSample,
    config: &TreeConfig,
    rng: &mut R,
) -> Result<DecisionTree> {
    config.validate()?;
    let n = ranked.len();
    let root_rect = ranked.root();
    let weight = config.weight;

    let mut nodes = vec![TreeNode {
        rect: root_rect,
        children: Vec::new(),
        n_obs: n as u64,
        label: weight.label(n as u64, permuted_count(&root_rect)),
        split: None,
    }];
    let mut members: Vec<Vec<u32>> = vec![(0..n as u32).collect()];
    let mut queue = BinaryHeap::new();
    let mut created = 0usize;

    let mut propose = |node: usize,
                       rect: &Rect,
                       members: &[u32],
                       queue: &mut BinaryHeap<Pending>,
                       rng: &mut R| {
        let cands = enumerate_candidates(
            rect,
            members,
            ranked,
            config.split_trial_count,
            config.min_leaf_width,
            config.criterion,
            weight,
            rng,
        );
        if let Some(cand) = best_candidate(&cands) {
            queue.push(Pending {
                gain: cand.gain,
                created,
                node,
                cand,
            });
        }
        created += 1;
    };

    propose(0, &root_rect, &members[0], &mut queue, rng);
    let mut leaf_count = 1;
    while leaf_count < config.max_leaf_count {
        let Some(Pending { node, cand, .. }) = queue.pop() else {
            break;
        };
        let parent_rect = nodes[node].rect;
        let parts = cand.way.parts(&parent_rect, cand.point);
        let parent_members = std::mem::take(&mut members[node]);
        let mut child_ids = Vec::with_capacity(parts.len());
        for part in &parts {
            let inside: Vec<u32> = parent_members
                .iter()
                .copied()
                .filter(|&i| {
                    let (x, y) = ranked.point(i as usize);
                    part.contains(x, y)
                })
                .collect();
            let n_obs = inside.len() as u64;
            child_ids.push(nodes.len());
            nodes.push(TreeNode {
                rect: *part,
                children: Vec::new(),
                n_obs,
                label: weight.label(n_obs, permuted_count(part)),
                split: None,
            });
            members.push(inside);
        }
        nodes[node].children = child_ids.clone();
        nodes[node].split = Some((cand.way, cand.point));
        leaf_count += parts.len() - 1;
        for id in child_ids {
            let rect = nodes[id].rect;
            propose(id, &rect, &members[id], &mut queue, rng);
        }
    }

    Ok(DecisionTree {
        nodes,
        rank_x: RankMap::new(sample.xs())?,
        rank_y: RankMap::new(sample.ys())?,
        criterion: config.criterion,
    })
}

/// Ranks `sample` and trains one tree on it.
pub fn train_tree<R: Rng + ?Sized>(
    sample: &RawSample,
    config: &TreeConfig,
    rng: &mut R,
) -> Result<DecisionTree> {
    let ranked = crate::rank_space::rank_training_sample(sample)?;
    train_ranked(sample, &ranked, config, rng)
}
