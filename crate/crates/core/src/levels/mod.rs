//! Subsampled sketch grid and the level-count estimators built on it.
//!
//! Cell `(φ, r)` of the grid holds a CountSketch over the substream of
//! coordinates sampled at rate `2^{-φ}`. A level is estimated from how often
//! its coordinates are recovered at the deepest rate where it is still seen
//! reliably.

mod estimate;
mod shape;

use serde::{Deserialize, Serialize};

use crate::countsketch::{CountSketchTable, HeavyHitterMap};
use crate::error::{Error, Result};
use crate::level::LevelGrid;
use crate::seed::{derive, keyed_hash, label};
use crate::stream::{StreamUpdate, default_bound};

pub use estimate::{conversion, conversion_from_log_miss, LevelDiagnostics, LevelEstimate};
pub use shape::{GridSize, LabScale, LabTargets, LevelConstants, SketchShape};

/// How levels are assigned to recovered coordinates at finalize time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Classifier {
    /// Exact frequencies from a second pass, at base `base`.
    Exact { base: f64 },
    /// Estimates only, at the randomized base `1 + x·γ`.
    Randomized { gamma: f64, x: f64 },
}

impl Classifier {
    pub fn base(&self) -> f64 {
        match self {
            Classifier::Exact { base } => *base,
            Classifier::Randomized { gamma, x } => 1.0 + x * gamma,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SampleLevelSketch {
    shape: SketchShape,
    classifier: Classifier,
    seed: u64,
    member_keys: Vec<u64>,
    words: usize,
    tables: Vec<Option<CountSketchTable>>,
}

/// Bit offset of the membership slice for depth `φ`.
#[inline]
fn slice_start(phi: usize) -> usize {
    phi * (phi.saturating_sub(1)) / 2
}

impl SampleLevelSketch {
    pub fn from_shape(shape: SketchShape, classifier: Classifier, seed: u64) -> Self {
        let bits = slice_start(shape.phi_max + 1);
        let words = bits.div_ceil(64).max(1);
        let member_keys = (0..shape.instances() * words)
            .map(|k| derive(seed, &[label("levels"), label("member"), k as u64]))
            .collect();
        let tables = vec![None; (shape.phi_max + 1) * shape.instances()];
        Self {
            shape,
            classifier,
            seed,
            member_keys,
            words,
            tables,
        }
    }

    /// Grid for the two-pass estimator at base `α`.
    pub fn two_pass(
        n: usize,
        base: f64,
        beta: f64,
        eps: f64,
        delta: f64,
        constants: &LevelConstants,
        lab: &LabScale,
        seed: u64,
    ) -> Result<Self> {
        if !(base > 1.0) {
            return Err(Error::param("alpha", "must exceed 1"));
        }
        let t = crate::level::level_count(base, default_bound(n));
        let eps_prime = constants.eps_prime_ratio * eps;
        let shape = SketchShape::derive(n, t, beta, eps, delta, eps_prime, false, constants, lab)?;
        Ok(Self::from_shape(shape, Classifier::Exact { base }, seed))
    }

    /// Grid for the one-pass estimator; `x` defaults to a seed-derived draw from `[1/2, 1]`.
    pub fn one_pass(
        n: usize,
        gamma: f64,
        beta: f64,
        eps: f64,
        delta: f64,
        x: Option<f64>,
        constants: &LevelConstants,
        lab: &LabScale,
        seed: u64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1)"));
        }
        let x = match x {
            Some(x) if (0.5..=1.0).contains(&x) => x,
            Some(x) => return Err(Error::param("x", format!("must lie in [1/2, 1], got {x}"))),
            None => {
                let h = derive(seed, &[label("levels"), label("base-offset")]);
                0.5 + 0.5 * (h >> 11) as f64 / (1u64 << 53) as f64
            }
        };
        let shape = one_pass_shape(n, gamma, beta, eps, delta, x, constants, lab)?;
        Ok(Self::from_shape(shape, Classifier::Randomized { gamma, x }, seed))
    }

    pub fn shape(&self) -> &SketchShape {
        &self.shape
    }

    pub fn classifier(&self) -> Classifier {
        self.classifier
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Counters the grid reserves, touched or not.
    pub fn counter_count(&self) -> usize {
        self.shape.counter_count()
    }

    /// Whether `index` is sampled into cell `(φ, instance)`.
    pub fn is_member(&self, phi: usize, instance: usize, index: u64) -> bool {
        let mut words = [0u64; 8];
        self.member_words(instance, index, &mut words);
        slice_all_ones(&words, phi)
    }

    fn member_words(&self, instance: usize, index: u64, out: &mut [u64; 8]) {
        for w in 0..self.words.min(8) {
            out[w] = keyed_hash(self.member_keys[instance * self.words + w], index);
        }
    }

    pub fn update(&mut self, u: StreamUpdate) -> Result<()> {
        if u.index >= self.shape.n as u64 {
            return Err(Error::IndexOutOfRange {
                index: u.index,
                n: self.shape.n,
            });
        }
        let mut words = [0u64; 8];
        let stride = self.shape.instances();
        for inst in 0..stride {
            self.member_words(inst, u.index, &mut words);
            for phi in 1..=self.shape.phi_max {
                if slice_all_ones(&words, phi) {
                    let slot = phi * stride + inst;
                    let (root, shape) = (self.seed, &self.shape);
                    self.tables[slot]
                        .get_or_insert_with(|| {
                            let seed = table_seed(root, phi, inst);
                            CountSketchTable::with_dims(shape.depth, shape.width, shape.capacity, seed)
                        })
                        .update(u);
                }
            }
        }
        Ok(())
    }

    pub fn ingest<'a, I>(&mut self, updates: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a StreamUpdate>,
    {
        for u in updates {
            self.update(*u)?;
        }
        Ok(())
    }

    /// Adds an identically configured sketch fed with a different shard.
    pub fn merge(&mut self, other: &SampleLevelSketch) -> Result<()> {
        if self.shape != other.shape || self.classifier != other.classifier {
            return Err(Error::IncompatibleMerge("grid shapes differ"));
        }
        if self.seed != other.seed {
            return Err(Error::IncompatibleMerge("root seeds differ"));
        }
        for (mine, theirs) in self.tables.iter_mut().zip(&other.tables) {
            match (mine.as_mut(), theirs) {
                (_, None) => {}
                (Some(a), Some(b)) => a.merge(b)?,
                (None, Some(b)) => *mine = Some(b.clone()),
            }
        }
        Ok(())
    }

    /// Heavy-hitter map of cell `(φ, instance)`.
    pub fn cell_map(&self, phi: usize, instance: usize) -> HeavyHitterMap {
        match &self.tables[phi * self.shape.instances() + instance] {
            Some(t) => t.heavy_hitters(self.shape.table_beta, self.shape.table_eps),
            None => HeavyHitterMap::default(),
        }
    }

    /// Indices recovered anywhere in the grid, for the exact second pass.
    pub fn recovered_indices(&self) -> Vec<u64> {
        let mut out: Vec<u64> = (1..=self.shape.phi_max)
            .flat_map(|phi| (0..self.shape.instances()).map(move |i| (phi, i)))
            .flat_map(|(phi, i)| self.cell_map(phi, i).entries.into_iter().map(|e| e.index))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn grid(&self) -> LevelGrid {
        LevelGrid::new(self.classifier.base(), default_bound(self.shape.n))
    }
}

fn table_seed(root: u64, phi: usize, instance: usize) -> u64 {
    derive(root, &[label("levels"), label("table"), phi as u64, instance as u64])
}

fn slice_all_ones(words: &[u64; 8], phi: usize) -> bool {
    let start = slice_start(phi);
    let mut remaining = phi;
    let mut pos = start;
    while remaining > 0 {
        let w = pos / 64;
        let off = pos % 64;
        let take = remaining.min(64 - off);
        let mask = if take == 64 { u64::MAX } else { ((1u64 << take) - 1) << off };
        if words[w] & mask != mask {
            return false;
        }
        pos += take;
        remaining -= take;
    }
    true
}

/// Grid of the one-pass sketch at base `1 + xγ`; tables answer to `γ²/(8 ln n)`.
#[allow(clippy::too_many_arguments)]
pub fn one_pass_shape(
    n: usize,
    gamma: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    x: f64,
    constants: &LevelConstants,
    lab: &LabScale,
) -> Result<SketchShape> {
    let (t, eps_cs) = one_pass_grid(n, gamma, x);
    SketchShape::derive(n, t, beta, eps, delta, eps_cs, true, constants, lab)
}

/// Level count and table precision of the one-pass grid.
fn one_pass_grid(n: usize, gamma: f64, x: f64) -> (usize, f64) {
    let t = crate::level::level_count(1.0 + x * gamma, default_bound(n));
    let ln_n = (n.max(2) as f64).ln();
    (t, gamma * gamma / (8.0 * ln_n))
}

/// Lab factors that bring the unscaled one-pass grid to `targets`.
#[allow(clippy::too_many_arguments)]
pub fn one_pass_lab(
    n: usize,
    gamma: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    x: f64,
    constants: &LevelConstants,
    targets: &LabTargets,
) -> Result<LabScale> {
    let (t, eps_cs) = one_pass_grid(n, gamma, x);
    let raw = GridSize::compute(n, t, beta, eps, delta, eps_cs, true, constants)?;
    Ok(LabScale::for_targets(&raw, targets))
}

/// Lab factors that bring the unscaled two-pass grid at base `α` to `targets`.
pub fn two_pass_lab(
    n: usize,
    base: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    constants: &LevelConstants,
    targets: &LabTargets,
) -> Result<LabScale> {
    let t = crate::level::level_count(base, default_bound(n));
    let raw = GridSize::compute(n, t, beta, eps, delta, constants.eps_prime_ratio * eps, false, constants)?;
    Ok(LabScale::for_targets(&raw, targets))
}

/// Two passes over `updates`: sketch, then exact frequencies of recovered coordinates.
pub fn estimate_levels_two_pass(
    updates: &[StreamUpdate],
    n: usize,
    base: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    constants: &LevelConstants,
    lab: &LabScale,
    seed: u64,
) -> Result<LevelEstimate> {
    let mut sk = SampleLevelSketch::two_pass(n, base, beta, eps, delta, constants, lab, seed)?;
    sk.ingest(updates)?;
    let wanted = sk.recovered_indices();
    let mut exact: rustc_hash::FxHashMap<u64, i64> = wanted.iter().map(|i| (*i, 0)).collect();
    for u in updates {
        if let Some(v) = exact.get_mut(&u.index) {
            *v += u.delta;
        }
    }
    Ok(sk.finalize_exact(&exact))
}

/// One pass over `updates` with the randomized-base classifier.
pub fn level1(
    updates: &[StreamUpdate],
    n: usize,
    gamma: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    x: Option<f64>,
    constants: &LevelConstants,
    lab: &LabScale,
    seed: u64,
) -> Result<LevelEstimate> {
    let mut sk = SampleLevelSketch::one_pass(n, gamma, beta, eps, delta, x, constants, lab, seed)?;
    sk.ingest(updates)?;
    sk.finalize_one_pass()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_shape(reps: usize, phi_max: usize) -> SketchShape {
        SketchShape {
            n: 1 << 12,
            t: 20,
            phi_max,
            repetitions: reps,
            block: 1,
            depth: 3,
            width: 16,
            capacity: 8,
            table_beta: 0.5,
            table_eps: 0.5,
            threshold: 2.0,
            eps_prime: 0.1,
        }
    }

    #[test]
    fn depth_zero_admits_everything() {
        let sk = SampleLevelSketch::from_shape(small_shape(4, 6), Classifier::Exact { base: 2.0 }, 1);
        for i in 0..500 {
            for r in 0..4 {
                assert!(sk.is_member(0, r, i));
            }
        }
    }

    #[test]
    fn membership_rate_at_depth_three() {
        let shape = small_shape(1, 5);
        let trials = 10_000u64;
        let hits = (0..trials)
            .filter(|s| {
                SampleLevelSketch::from_shape(shape.clone(), Classifier::Exact { base: 2.0 }, *s)
                    .is_member(3, 0, 42)
            })
            .count() as f64;
        let p = 1.0 / 8.0;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p).abs() <= 3.0 * se, "{hits}");
    }

    #[test]
    fn membership_is_not_nested() {
        let sk = SampleLevelSketch::from_shape(small_shape(1, 6), Classifier::Exact { base: 2.0 }, 3);
        let deep_only = (0..20_000u64).any(|i| sk.is_member(3, 0, i) && !sk.is_member(2, 0, i));
        assert!(deep_only);
    }

    #[test]
    fn membership_is_deterministic() {
        let a = SampleLevelSketch::from_shape(small_shape(2, 6), Classifier::Exact { base: 2.0 }, 9);
        let b = SampleLevelSketch::from_shape(small_shape(2, 6), Classifier::Exact { base: 2.0 }, 9);
        for i in 0..1000 {
            assert_eq!(a.is_member(4, 1, i), b.is_member(4, 1, i));
        }
    }

    #[test]
    fn slices_cover_wide_grids() {
        let mut words = [u64::MAX; 8];
        assert!(slice_all_ones(&words, 20));
        words[2] = 0;
        assert!(slice_all_ones(&words, 0));
        // depth 11 uses bits 55..66, crossing the first word boundary
        assert!(slice_all_ones(&words, 11));
        // depth 16 spans bits 120..136 and reaches the cleared third word
        assert!(!slice_all_ones(&words, 16));
        assert!(!slice_all_ones(&words, 17));
        assert!(slice_all_ones(&words, 14));
    }

    #[test]
    fn rejects_bad_one_pass_parameters() {
        let c = LevelConstants::default();
        let lab = LabScale::default();
        assert!(SampleLevelSketch::one_pass(1000, 1.0, 0.1, 0.2, 0.01, None, &c, &lab, 1).is_err());
        assert!(SampleLevelSketch::one_pass(1000, 0.5, 0.1, 0.2, 0.01, Some(0.4), &c, &lab, 1).is_err());
        assert!(SampleLevelSketch::one_pass(1000, 0.5, 0.1, 0.2, 0.01, Some(1.01), &c, &lab, 1).is_err());
    }

    #[test]
    fn out_of_range_update() {
        let mut sk = SampleLevelSketch::from_shape(small_shape(1, 3), Classifier::Exact { base: 2.0 }, 1);
        assert!(matches!(
            sk.update(StreamUpdate::new(1 << 12, 1)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
