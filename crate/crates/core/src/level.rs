//! Level vectors: per-band counts of coordinate magnitudes at a geometric base.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::VectorView;
use crate::stream::FrequencyVector;
use crate::Scalar;

/// Number of levels needed so every magnitude in `[1, m]` has a level.
pub fn level_count(base: f64, m: u64) -> usize {
    let m = m.max(1) as f64;
    (m.ln() / base.ln()).ceil() as usize + 1
}

/// Precomputed powers `α^0..α^t`, shared by every classifier so boundaries agree.
#[derive(Clone, Debug)]
pub struct LevelGrid {
    base: f64,
    powers: Vec<f64>,
}

impl LevelGrid {
    pub fn new(base: f64, m: u64) -> Self {
        let t = level_count(base, m);
        let powers = (0..=t as i32).map(|i| base.powi(i)).collect();
        Self { base, powers }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn levels(&self) -> usize {
        self.powers.len() - 1
    }

    /// Level `i ≥ 1` with `α^{i-1} ≤ x < α^i`; 0 for `x = 0`.
    pub fn level_of(&self, x: u64) -> usize {
        if x == 0 {
            return 0;
        }
        let xf = x as f64;
        self.powers.partition_point(|p| *p <= xf).min(self.levels())
    }

    /// Level of a real magnitude, extended past `t` if needed.
    pub fn level_of_real(&self, x: f64) -> usize {
        if x < 1.0 {
            return 0;
        }
        let k = self.powers.partition_point(|p| *p <= x);
        if k < self.powers.len() {
            k
        } else {
            (x.ln() / self.base.ln()).floor() as usize + 1
        }
    }

    pub fn smallest_integer_in(&self, level: usize) -> Option<u64> {
        if level == 0 || level > self.levels() {
            return None;
        }
        let lo = self.powers[level - 1].ceil() as u64;
        (self.level_of(lo) == level).then_some(lo)
    }
}

/// Base `α` plus counts `b_1..b_t`; `counts[0]` is level 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelVector<T> {
    pub base: T,
    pub counts: Vec<u64>,
}

impl<T: Scalar> LevelVector<T> {
    pub fn new(base: T, counts: Vec<u64>) -> Result<Self> {
        if !(base > T::one()) {
            return Err(Error::param("base", "must exceed 1"));
        }
        Ok(Self { base, counts })
    }

    pub fn zeros(base: T, t: usize) -> Self {
        Self {
            base,
            counts: vec![0; t],
        }
    }

    pub fn t(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Value `α^i` held by every coordinate of level `i` (1-based).
    pub fn level_value(&self, level: usize) -> T {
        self.base.powi(level as i32)
    }

    /// Coordinate-query view of the materialized vector in dimension `n`.
    pub fn view(&self, n: usize) -> Result<LevelView<T>> {
        let total = self.total();
        if total > n as u64 {
            return Err(Error::CountsExceedDimension { total, n });
        }
        let mut ends = Vec::with_capacity(self.t());
        let mut acc = 0u64;
        for c in &self.counts {
            acc += c;
            ends.push(acc);
        }
        let values = (1..=self.t()).map(|i| self.level_value(i)).collect();
        Ok(LevelView {
            n,
            ends,
            values,
            counts: self.counts.clone(),
        })
    }

    pub fn materialize(&self, n: usize) -> Result<Vec<T>> {
        let view = self.view(n)?;
        Ok((0..n).map(|i| view.get(i)).collect())
    }

    /// The vector keeping only level `level` (1-based).
    pub fn only_level(&self, level: usize) -> Self {
        let mut counts = vec![0; self.t()];
        if (1..=self.t()).contains(&level) {
            counts[level - 1] = self.counts[level - 1];
        }
        Self {
            base: self.base,
            counts,
        }
    }

    pub fn with_count(&self, level: usize, count: u64) -> Self {
        let mut out = self.clone();
        out.counts[level - 1] = count;
        out
    }

    /// Whether level `i` dominates both the count above it and the squared mass below it.
    pub fn is_important(&self, level: usize, beta: f64) -> bool {
        let i = level - 1;
        let b = self.counts[i] as f64;
        if b == 0.0 {
            return false;
        }
        let above: f64 = self.counts[i + 1..].iter().map(|c| *c as f64).sum();
        if !(b > beta * above) {
            return false;
        }
        // compare squared masses relative to level i to avoid overflow
        let a2 = self.base.f64().powi(2);
        let below: f64 = self.counts[..=i]
            .iter()
            .enumerate()
            .map(|(j, c)| *c as f64 * a2.powi(j as i32 - i as i32))
            .sum();
        b >= beta * below
    }

    pub fn important_levels(&self, beta: f64) -> Vec<usize> {
        (1..=self.t()).filter(|i| self.is_important(*i, beta)).collect()
    }
}

/// Coordinates `0..b_1` hold `α`, the next `b_2` hold `α^2`, and so on; the rest are zero.
#[derive(Clone, Debug)]
pub struct LevelView<T> {
    n: usize,
    ends: Vec<u64>,
    values: Vec<T>,
    counts: Vec<u64>,
}

impl<T: Scalar> VectorView<T> for LevelView<T> {
    fn len(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize) -> T {
        let k = self.ends.partition_point(|e| *e <= i as u64);
        if k < self.values.len() {
            self.values[k]
        } else {
            T::zero()
        }
    }

    fn magnitudes(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n);
        for (c, v) in self.counts.iter().zip(&self.values) {
            out.extend(std::iter::repeat_n(*v, *c as usize));
        }
        out.resize(self.n, T::zero());
        out
    }
}

/// Exact level vector of `v` at base `α`, with `t` derived from the vector's magnitude bound.
pub fn exact_level_vector<T: Scalar>(v: &FrequencyVector, base: T) -> Result<LevelVector<T>> {
    if !(base > T::one()) {
        return Err(Error::param("base", "must exceed 1"));
    }
    let grid = LevelGrid::new(base.f64(), v.bound());
    let mut counts = vec![0u64; grid.levels()];
    for x in v.values() {
        let mag = x.unsigned_abs();
        if mag > v.bound() {
            return Err(Error::MagnitudeBound {
                index: 0,
                magnitude: u128::from(mag),
                bound: v.bound(),
            });
        }
        let level = grid.level_of(mag);
        if level > 0 {
            counts[level - 1] += 1;
        }
    }
    Ok(LevelVector { base, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_levels() {
        let v = FrequencyVector::from_values(vec![1, -2, 4, 0]);
        let lv = exact_level_vector(&v, 2.0f64).unwrap();
        assert_eq!(lv.t(), level_count(2.0, 64));
        assert_eq!(&lv.counts[..3], &[1, 1, 1]);
        assert_eq!(lv.total(), 3);
    }

    #[test]
    fn zero_vector_has_no_levels() {
        let v = FrequencyVector::new(3);
        assert_eq!(exact_level_vector(&v, 1.3f64).unwrap().total(), 0);
    }

    #[test]
    fn magnitude_three_at_base_one_point_one() {
        let v = FrequencyVector::from_values(vec![3; 100]);
        let lv = exact_level_vector(&v, 1.1f64).unwrap();
        assert_eq!(lv.counts[11], 100);
        assert_eq!(lv.total(), 100);
        assert!(1.1f64.powi(11) <= 3.0 && 3.0 < 1.1f64.powi(12));
    }

    #[test]
    fn materialize_examples() {
        let lv = LevelVector::new(2.0f64, vec![1, 1, 1]).unwrap();
        assert_eq!(lv.materialize(5).unwrap(), vec![2.0, 4.0, 8.0, 0.0, 0.0]);
        let lv = LevelVector::new(2.0f64, vec![0, 3]).unwrap();
        assert_eq!(lv.materialize(4).unwrap(), vec![4.0, 4.0, 4.0, 0.0]);
        assert!(LevelVector::zeros(2.0f64, 4).materialize(3).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(
            lv.view(2),
            Err(Error::CountsExceedDimension { total: 3, n: 2 })
        ));
    }

    #[test]
    fn view_agrees_with_dense() {
        let lv = LevelVector::new(1.5f64, vec![2, 0, 3, 1]).unwrap();
        let view = lv.view(9).unwrap();
        let dense = lv.materialize(9).unwrap();
        for (i, d) in dense.iter().enumerate() {
            assert_eq!(view.get(i), *d);
        }
        assert_eq!(view.magnitudes(), dense);
    }

    #[test]
    fn importance_inequalities() {
        // 1000 at level 2 and 10 at level 11, base 2
        let mut counts = vec![0u64; 12];
        counts[1] = 1000;
        counts[10] = 10;
        let lv = LevelVector::new(2.0f64, counts).unwrap();
        assert!(lv.is_important(2, 0.01));
        assert!(lv.is_important(11, 0.01));
        assert!(!lv.is_important(3, 0.01));
        // a tiny level under a heavy one above it is not important
        let lv = LevelVector::new(2.0f64, vec![1, 0, 100]).unwrap();
        assert!(!lv.is_important(1, 0.1));
        assert_eq!(lv.important_levels(0.1), vec![3]);
    }

    #[test]
    fn grid_boundaries() {
        let g = LevelGrid::new(2.0, 1 << 20);
        assert_eq!(g.level_of(1), 1);
        assert_eq!(g.level_of(2), 2);
        assert_eq!(g.level_of(3), 2);
        assert_eq!(g.level_of(4), 3);
        assert_eq!(g.smallest_integer_in(3), Some(4));
        let fine = LevelGrid::new(1.01, 1000);
        // early fine levels hold no integer
        assert_eq!(fine.smallest_integer_in(2), None);
    }
}
