//! Rank-order transform of bivariate samples and exact counting of the
//! virtual permuted sample inside rank-space rectangles.
//!
//! Ranks follow the counting rule `rank(v) = |{ j : v <= values[j] }|`, so
//! the largest value has rank 1 and the smallest has rank `n`. The training
//! sample breaks ties by position, which makes each axis an exact
//! permutation of `1..=n`. Under that condition the permuted sample
//! `{(rx_i, ry_j)}` holds exactly `width_x * width_y` points in any rectangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paired observations of two real variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl RawSample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                x_len: xs.len(),
                y_len: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::Empty);
        }
        check_finite(&xs)?;
        check_finite(&ys)?;
        Ok(Self { xs, ys })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (xs, ys) = pairs.iter().copied().unzip();
        Self::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn into_columns(self) -> (Vec<f64>, Vec<f64>) {
        (self.xs, self.ys)
    }

    /// Rows picked by `indices`, in order, duplicates kept.
    pub fn select(&self, indices: &[usize]) -> RawSample {
        RawSample {
            xs: indices.iter().map(|&i| self.xs[i]).collect(),
            ys: indices.iter().map(|&i| self.ys[i]).collect(),
        }
    }

    /// Same x column, y column replaced. Values are assumed finite.
    pub(crate) fn with_ys(&self, ys: Vec<f64>) -> RawSample {
        debug_assert_eq!(ys.len(), self.xs.len());
        RawSample {
            xs: self.xs.clone(),
            ys,
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Maps arbitrary values of one axis into the rank space of a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMap {
    sorted_values: Vec<f64>,
}

impl RankMap {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        check_finite(values)?;
        let mut sorted_values = values.to_vec();
        sorted_values.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted_values })
    }

    pub fn len(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_values.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    /// Number of training values `>= v`; in `0..=n`, non-increasing in `v`.
    pub fn rank_of(&self, v: f64) -> u32 {
        let below = self.sorted_values.partition_point(|&s| s < v);
        (self.sorted_values.len() - below) as u32
    }

    /// Rank of a query point, clamped into the root interval `(0, n]`.
    pub fn query_rank(&self, v: f64) -> u32 {
        self.rank_of(v).max(1)
    }
}

/// Shorthand for [`RankMap::new`].
pub fn build_rank_map(values: &[f64]) -> Result<RankMap> {
    RankMap::new(values)
}

/// A sample in integer rank coordinates; both axes are permutations of `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSample {
    rx: Vec<u32>,
    ry: Vec<u32>,
}

impl RankedSample {
    /// Builds from precomputed rank columns, checking that both are permutations.
    pub fn from_ranks(rx: Vec<u32>, ry: Vec<u32>) -> Result<Self> {
        if rx.len() != ry.len() {
            return Err(Error::LengthMismatch {
                x_len: rx.len(),
                y_len: ry.len(),
            });
        }
        if !is_permutation(&rx) || !is_permutation(&ry) {
            return Err(Error::InvalidConfig(
                "rank columns must be permutations of 1..=n".into(),
            ));
        }
        Ok(Self { rx, ry })
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn rx(&self) -> &[u32] {
        &self.rx
    }

    pub fn ry(&self) -> &[u32] {
        &self.ry
    }

    pub fn root(&self) -> Rect {
        Rect::root(self.len() as u32)
    }

    pub fn point(&self, i: usize) -> (u32, u32) {
        (self.rx[i], self.ry[i])
    }

    /// Observed examples inside `rect`, by linear scan.
    pub fn observed_count(&self, rect: &Rect) -> usize {
        self.rx
            .iter()
            .zip(&self.ry)
            .filter(|&(&x, &y)| rect.contains(x, y))
            .count()
    }
}

fn is_permutation(ranks: &[u32]) -> bool {
    let n = ranks.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        let r = r as usize;
        if r == 0 || r > n || seen[r - 1] {
            return false;
        }
        seen[r - 1] = true;
    }
    true
}

/// Training ranks of one column: descending by value, ties by ascending index.
fn training_ranks(values: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0u32; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos as u32 + 1;
    }
    ranks
}

/// Transforms a training sample into rank space.
pub fn rank_training_sample(sample: &RawSample) -> Result<RankedSample> {
    if sample.len() < 2 {
        return Err(Error::TooSmall {
            n: sample.len(),
            reason: "ranking needs at least 2 observations",
        });
    }
    Ok(RankedSample {
        rx: training_ranks(sample.xs()),
        ry: training_ranks(sample.ys()),
    })
}

/// Half-open rank rectangle `(x_lo, x_hi] x (y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: u32,
    pub x_hi: u32,
    pub y_lo: u32,
    pub y_hi: u32,
}

impl Rect {
    pub fn new(x_lo: u32, x_hi: u32, y_lo: u32, y_hi: u32) -> Result<Self> {
        if x_lo >= x_hi || y_lo >= y_hi {
            return Err(Error::InvalidConfig(format!(
                "empty rectangle ({x_lo},{x_hi}]x({y_lo},{y_hi}]"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        })
    }

    pub fn root(n: u32) -> Self {
        Self {
            x_lo: 0,
            x_hi: n,
            y_lo: 0,
            y_hi: n,
        }
    }

    pub fn width_x(&self) -> u32 {
        self.x_hi - self.x_lo
    }

    pub fn width_y(&self) -> u32 {
        self.y_hi - self.y_lo
    }

    pub fn contains(&self, rx: u32, ry: u32) -> bool {
        self.x_lo < rx && rx <= self.x_hi && self.y_lo < ry && ry <= self.y_hi
    }

    /// Exact number of virtual permuted examples inside the rectangle.
    pub fn permuted_count(&self) -> u64 {
        permuted_count(self)
    }
}

pub fn permuted_count(rect: &Rect) -> u64 {
    u64::from(rect.width_x()) * u64::from(rect.width_y())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_of_counts_values_at_or_above() {
        let map = build_rank_map(&[0.2, 1.5, -3.0]).unwrap();
        assert_eq!(map.rank_of(1.5), 1);
        assert_eq!(map.rank_of(0.2), 2);
        assert_eq!(map.rank_of(-3.0), 3);
        assert_eq!(map.rank_of(10.0), 0);
        assert_eq!(map.rank_of(-10.0), 3);
        assert_eq!(map.query_rank(10.0), 1);
    }

    #[test]
    fn rank_of_all_ties() {
        let map = build_rank_map(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(map.rank_of(5.0), 3);
    }

    #[test]
    fn rank_map_rejects_nan() {
        assert!(matches!(
            build_rank_map(&[1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(RawSample::new(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(RawSample::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn training_ranks_descend() {
        let s = RawSample::new(vec![10.0, 30.0, 20.0], vec![1.0, 2.0, 3.0]).unwrap();
        let r = rank_training_sample(&s).unwrap();
        assert_eq!(r.rx(), &[3, 1, 2]);
        assert_eq!(r.ry(), &[3, 2, 1]);
    }

    #[test]
    fn duplicated_rows_get_consecutive_ranks() {
        let s = RawSample::new(vec![0.5, 0.9, 0.5], vec![2.0, 1.0, 2.0]).unwrap();
        let r = rank_training_sample(&s).unwrap();
        assert_eq!(r.rx(), &[2, 1, 3]);
        assert_eq!(r.ry(), &[1, 3, 2]);
    }

    #[test]
    fn ranking_needs_two_rows() {
        let s = RawSample::new(vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            rank_training_sample(&s),
            Err(Error::TooSmall { n: 1, .. })
        ));
    }

    #[test]
    fn permuted_count_is_area() {
        let rect = Rect::new(3, 7, 2, 5).unwrap();
        assert_eq!(permuted_count(&rect), 12);
        assert_eq!(Rect::root(9).permuted_count(), 81);
        assert!(Rect::new(3, 3, 0, 1).is_err());
    }

    #[test]
    fn root_holds_every_observation() {
        let s = RawSample::new(vec![3.0, 1.0, 2.0, 7.0], vec![0.0, 9.0, 4.0, 1.0]).unwrap();
        let r = rank_training_sample(&s).unwrap();
        assert_eq!(r.observed_count(&r.root()), 4);
    }

    proptest! {
        #[test]
        fn ranks_are_permutations(xs in proptest::collection::vec(-5i32..5, 2..40)) {
            let values: Vec<f64> = xs.iter().map(|&v| f64::from(v)).collect();
            let s = RawSample::new(values.clone(), values).unwrap();
            let r = rank_training_sample(&s).unwrap();
            prop_assert!(is_permutation(r.rx()));
            prop_assert!(is_permutation(r.ry()));
        }

        #[test]
        fn monotone_transform_keeps_ranks(
            xs in proptest::collection::vec(-100.0f64..100.0, 2..40),
            ys in proptest::collection::vec(-100.0f64..100.0, 2..40),
        ) {
            let n = xs.len().min(ys.len());
            let (xs, ys) = (xs[..n].to_vec(), ys[..n].to_vec());
            let base = rank_training_sample(&RawSample::new(xs.clone(), ys.clone()).unwrap()).unwrap();
            let moved: Vec<f64> = xs.iter().map(|v| (v / 50.0).exp() * 3.0 - 1.0).collect();
            let other = rank_training_sample(&RawSample::new(moved, ys).unwrap()).unwrap();
            prop_assert_eq!(base, other);
        }

        #[test]
        fn rank_of_is_non_increasing(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..30),
            a in -12.0f64..12.0,
            b in -12.0f64..12.0,
        ) {
            let map = build_rank_map(&xs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(map.rank_of(lo) >= map.rank_of(hi));
            prop_assert!(map.rank_of(lo) as usize <= xs.len());
            let brute = xs.iter().filter(|&&x| lo <= x).count();
            prop_assert_eq!(map.rank_of(lo) as usize, brute);
        }
    }
}
