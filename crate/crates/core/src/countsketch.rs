//! CountSketch with a bounded candidate tracker and a heavy-hitter cover.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive, keyed_hash, label, reduce};
use crate::stream::StreamUpdate;

pub const DEFAULT_WIDTH_CONSTANT: f64 = 8.0;
pub const DEFAULT_DEPTH_CONSTANT: f64 = 3.0;

/// One recovered coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitter {
    pub index: u64,
    /// Inflated estimate `|est|·(1+ε/2)`.
    pub estimate: f64,
    /// Median estimate `|est|` before inflation.
    pub raw: f64,
    /// Error scale of `raw`; zero when every row agrees.
    pub noise: f64,
}

impl HeavyHitter {
    /// `raw ± noise`.
    pub fn interval(&self) -> (f64, f64) {
        ((self.raw - self.noise).max(0.0), self.raw + self.noise)
    }
}

/// Recovered coordinates, sorted by index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterMap {
    pub entries: Vec<HeavyHitter>,
}

impl HeavyHitterMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u64) -> Option<f64> {
        self.entries
            .binary_search_by_key(&index, |e| e.index)
            .ok()
            .map(|k| self.entries[k].estimate)
    }

    pub fn contains(&self, index: u64) -> bool {
        self.get(index).is_some()
    }

    /// Entries by increasing estimate, ties to the lower index.
    pub fn increasing(&self) -> Vec<HeavyHitter> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| a.estimate.total_cmp(&b.estimate).then(a.index.cmp(&b.index)));
        out
    }
}

#[derive(Clone, Debug)]
pub struct CountSketchTable {
    depth: usize,
    width: usize,
    capacity: usize,
    seed: u64,
    bucket_keys: Vec<u64>,
    sign_keys: Vec<u64>,
    counters: Vec<i64>,
    tracker: FxHashMap<u64, f64>,
}

impl CountSketchTable {
    /// Table sized for a `(β, ε)`-cover: width from `ε/2` accuracy, depth from `δ`.
    pub fn new(n: usize, beta: f64, eps: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1]"));
        }
        if !(eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        if !(delta > 0.0 && delta < eps) {
            return Err(Error::param("delta", "must satisfy 0 < δ < ε"));
        }
        let half = eps / 2.0;
        let width = (DEFAULT_WIDTH_CONSTANT / (half * half * beta)).ceil() as usize;
        let depth = (DEFAULT_DEPTH_CONSTANT * (n.max(2) as f64 / delta).ln()).ceil() as usize;
        Ok(Self::with_dims(depth, width, tracker_capacity(beta), seed))
    }

    pub fn with_dims(depth: usize, width: usize, capacity: usize, seed: u64) -> Self {
        let depth = depth.max(1);
        let width = width.max(1);
        let bucket_keys = (0..depth)
            .map(|r| derive(seed, &[label("countsketch"), label("bucket"), r as u64]))
            .collect();
        let sign_keys = (0..depth)
            .map(|r| derive(seed, &[label("countsketch"), label("sign"), r as u64]))
            .collect();
        Self {
            depth,
            width,
            capacity: capacity.max(1),
            seed,
            bucket_keys,
            sign_keys,
            counters: vec![0; depth * width],
            tracker: FxHashMap::default(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn counter_count(&self) -> usize {
        self.depth * self.width
    }

    pub fn counters(&self) -> &[i64] {
        &self.counters
    }

    pub fn tracked(&self) -> usize {
        self.tracker.len()
    }

    #[inline]
    fn cell(&self, row: usize, index: u64) -> (usize, i64) {
        let b = reduce(keyed_hash(self.bucket_keys[row], index), self.width);
        let s = if keyed_hash(self.sign_keys[row], index) >> 63 == 0 {
            1
        } else {
            -1
        };
        (row * self.width + b, s)
    }

    pub fn update(&mut self, u: StreamUpdate) {
        let mut stack = [0i64; STACK_ROWS];
        let mut heap = Vec::new();
        let ests = row_buffer(&mut stack, &mut heap, self.depth);
        for (row, est) in ests.iter_mut().enumerate() {
            let (c, s) = self.cell(row, u.index);
            self.counters[c] += s * u.delta;
            *est = s * self.counters[c];
        }
        let est = median(ests).abs();
        self.tracker.insert(u.index, est);
        if self.tracker.len() > self.capacity {
            self.prune((self.capacity / 2).max(1));
        }
    }

    /// Median over rows of the signed counter.
    pub fn query(&self, index: u64) -> f64 {
        let mut stack = [0i64; STACK_ROWS];
        let mut heap = Vec::new();
        let ests = row_buffer(&mut stack, &mut heap, self.depth);
        for (row, est) in ests.iter_mut().enumerate() {
            let (c, s) = self.cell(row, index);
            *est = s * self.counters[c];
        }
        median(ests)
    }

    fn rows_agree(&self, index: u64) -> bool {
        let first = {
            let (c, s) = self.cell(0, index);
            s * self.counters[c]
        };
        (1..self.depth).all(|row| {
            let (c, s) = self.cell(row, index);
            s * self.counters[c] == first
        })
    }

    /// Tracked candidates by decreasing current estimate, ties to the lower index.
    fn ranked_candidates(&self) -> Vec<(u64, f64)> {
        let mut cands: Vec<(u64, f64)> = self
            .tracker
            .keys()
            .map(|i| (*i, self.query(*i)))
            .collect();
        cands.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        cands
    }

    fn prune(&mut self, keep: usize) {
        let cands = self.ranked_candidates();
        self.tracker.clear();
        for (i, est) in cands.into_iter().take(keep) {
            self.tracker.insert(i, est.abs());
        }
    }

    /// Median over rows of the residual `Σ counter²` after removing `top`.
    fn residual_f2(&self, top: &[(u64, f64)]) -> f64 {
        let mut per_row: Vec<f64> = (0..self.depth)
            .map(|row| {
                let base = row * self.width;
                let mut cells: Vec<f64> = self.counters[base..base + self.width]
                    .iter()
                    .map(|c| *c as f64)
                    .collect();
                for (i, est) in top {
                    let (c, s) = self.cell(row, *i);
                    cells[c - base] -= s as f64 * est;
                }
                cells.iter().map(|c| c * c).sum()
            })
            .collect();
        per_row.sort_by(f64::total_cmp);
        per_row[per_row.len() / 2]
    }

    /// Reports candidates that are heavy against the estimated tail and whose
    /// estimate is sharp enough for the `(1+ε)` contract; at most `⌊2/β⌋` entries.
    /// Sharp means every row reports the same value, or the per-row noise scale
    /// `σ = √(F̂tail/w)` of the residual tail is at most `(ε/2)·|est|`.
    pub fn heavy_hitters(&self, beta: f64, eps: f64) -> HeavyHitterMap {
        let cands: Vec<(u64, f64)> = self
            .ranked_candidates()
            .into_iter()
            .filter(|(_, e)| *e != 0.0)
            .collect();
        let head = ((1.0 / beta).floor() as usize).min(cands.len());
        let tail = self.residual_f2(&cands[..head]);
        let noise = (tail / self.width as f64).sqrt();
        let cap = (2.0 / beta).floor() as usize;
        let mut entries: Vec<HeavyHitter> = cands
            .iter()
            .filter(|(_, e)| e * e >= beta / 2.0 * tail)
            .filter_map(|(i, e)| {
                let spread = if self.rows_agree(*i) { 0.0 } else { noise };
                (eps / 2.0 * e.abs() >= spread).then_some(HeavyHitter {
                    index: *i,
                    estimate: e.abs() * (1.0 + eps / 2.0),
                    raw: e.abs(),
                    noise: spread,
                })
            })
            .take(cap)
            .collect();
        entries.sort_by_key(|e| e.index);
        HeavyHitterMap { entries }
    }

    /// Adds another identically seeded table's counters, then re-derives candidates.
    pub fn merge(&mut self, other: &CountSketchTable) -> Result<()> {
        if self.depth != other.depth || self.width != other.width {
            return Err(Error::IncompatibleMerge("table dimensions differ"));
        }
        if self.seed != other.seed {
            return Err(Error::IncompatibleMerge("hash seeds differ"));
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        for i in other.tracker.keys() {
            self.tracker.insert(*i, 0.0);
        }
        self.prune(self.capacity);
        Ok(())
    }
}

const STACK_ROWS: usize = 32;

fn row_buffer<'a>(stack: &'a mut [i64; STACK_ROWS], heap: &'a mut Vec<i64>, depth: usize) -> &'a mut [i64] {
    if depth <= STACK_ROWS {
        &mut stack[..depth]
    } else {
        heap.resize(depth, 0);
        heap
    }
}

fn median(ests: &mut [i64]) -> f64 {
    ests.sort_unstable();
    let m = ests.len() / 2;
    if ests.len() % 2 == 1 {
        ests[m] as f64
    } else {
        (ests[m - 1] as f64 + ests[m] as f64) / 2.0
    }
}

/// Tracker capacity `⌈4/β⌉`.
pub fn tracker_capacity(beta: f64) -> usize {
    (4.0 / beta).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{FrequencyVector, StreamSpec};

    fn table(seed: u64) -> CountSketchTable {
        CountSketchTable::with_dims(7, 64, 16, seed)
    }

    #[test]
    fn single_item_is_exact() {
        let mut t = table(1);
        assert_eq!(t.query(3), 0.0);
        t.update(StreamUpdate::new(3, 5));
        assert_eq!(t.query(3), 5.0);
        t.update(StreamUpdate::new(3, -5));
        assert_eq!(t.query(3), 0.0);
        assert!(t.counters().iter().all(|c| *c == 0));
    }

    #[test]
    fn negated_update_restores_counters() {
        let mut t = table(2);
        for i in 0..50 {
            t.update(StreamUpdate::new(i, (i as i64 % 7) - 3));
        }
        let before = t.counters().to_vec();
        t.update(StreamUpdate::new(11, 42));
        t.update(StreamUpdate::new(11, -42));
        assert_eq!(t.counters(), before.as_slice());
    }

    #[test]
    fn tracker_is_bounded() {
        let mut t = CountSketchTable::with_dims(3, 32, 8, 4);
        for i in 0..1000u64 {
            t.update(StreamUpdate::new(i, 1 + (i % 5) as i64));
            assert!(t.tracked() <= 8);
        }
    }

    #[test]
    fn rejects_delta_not_below_eps() {
        assert!(CountSketchTable::new(100, 0.1, 0.2, 0.2, 1).is_err());
        assert!(CountSketchTable::new(100, 0.1, 0.2, 0.3, 1).is_err());
        let t = CountSketchTable::new(100, 0.1, 0.2, 0.01, 1).unwrap();
        assert!(t.width() as f64 >= 8.0 / (0.2 * 0.2 * 0.1));
        assert!(t.depth() as f64 >= 3.0 * (100.0f64 / 0.01).ln());
        assert_eq!(t.capacity(), 40);
    }

    #[test]
    fn spike_is_covered() {
        let spec = StreamSpec::single_spike(200, 7, 100, 0);
        let mut t = table(9);
        for u in crate::generate_stream(&spec).unwrap() {
            t.update(u);
        }
        let map = t.heavy_hitters(0.1, 0.2);
        let d = map.get(7).unwrap();
        assert!((100.0..=120.0).contains(&d));
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn beta_one_caps_at_two() {
        let mut t = table(5);
        for i in 0..10u64 {
            t.update(StreamUpdate::new(i, 1000 * (i as i64 + 1)));
        }
        assert!(t.heavy_hitters(1.0, 0.5).len() <= 2);
    }

    #[test]
    fn merge_is_linear() {
        let a_ups: Vec<_> = (0..300u64).map(|i| StreamUpdate::new(i % 97, (i % 11) as i64 - 5)).collect();
        let b_ups: Vec<_> = (0..300u64).map(|i| StreamUpdate::new(i % 53, 3 - (i % 7) as i64)).collect();
        let mut a = table(17);
        let mut b = table(17);
        let mut whole = table(17);
        a_ups.iter().for_each(|u| a.update(*u));
        b_ups.iter().for_each(|u| b.update(*u));
        a_ups.iter().chain(&b_ups).for_each(|u| whole.update(*u));
        a.merge(&b).unwrap();
        assert_eq!(a.counters(), whole.counters());
        assert!(a.tracked() <= a.capacity());
        assert!(a.merge(&table(18)).is_err());
    }

    #[test]
    fn planted_spike_over_noise() {
        let mut hits = 0;
        for s in 0..200u64 {
            let mut vals = vec![0i64; 200];
            for (k, v) in vals.iter_mut().enumerate().skip(1).take(100) {
                *v = if (k as u64 + s) % 2 == 0 { 1 } else { -1 };
            }
            vals[0] = 50;
            let fv = FrequencyVector::from_values(vals.clone());
            let mut t = CountSketchTable::with_dims(7, 64, 16, 1000 + s);
            for (i, v) in vals.iter().enumerate() {
                if *v != 0 {
                    t.update(StreamUpdate::new(i as u64, *v));
                }
            }
            assert!(50.0 * 50.0 >= 0.25 * fv.f2_tail(4));
            if t.heavy_hitters(0.25, 0.2).contains(0) {
                hits += 1;
            }
        }
        assert!(hits >= 190, "{hits}");
    }
}
