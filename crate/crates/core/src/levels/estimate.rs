use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{Classifier, SampleLevelSketch, SketchShape};
use crate::error::{Error, Result};
use crate::level::{LevelGrid, LevelVector};

/// Inverts `η = 1 − (1 − p)^b` for `b`.
pub fn conversion(eta: f64, p: f64) -> f64 {
    (-eta).ln_1p() / (-p).ln_1p()
}

/// Same inversion with the miss probability `1 − η` given as its logarithm,
/// which stays exact when `η` rounds to 1.
pub fn conversion_from_log_miss(ln_miss: f64, p: f64) -> f64 {
    ln_miss / (-p).ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    /// Deepest depth whose occupancy clears the threshold.
    pub q: Option<usize>,
    pub eta: f64,
    /// Occupancy per depth `φ = 0..=Φ`.
    pub occupancy: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub base: f64,
    pub counts: Vec<u64>,
    /// Unrounded estimates.
    pub raw: Vec<f64>,
    pub classifier: Classifier,
    pub shape: SketchShape,
    /// Levels with nonzero occupancy somewhere.
    pub diagnostics: Vec<LevelDiagnostics>,
    pub maps: usize,
    pub discarded_maps: usize,
    /// Blocks where every map was discarded.
    pub empty_blocks: usize,
    pub counters: usize,
}

impl LevelEstimate {
    pub fn level_vector(&self) -> LevelVector<f64> {
        LevelVector {
            base: self.base,
            counts: self.counts.clone(),
        }
    }

    pub fn occupancy(&self, level: usize) -> Option<&[u32]> {
        self.diagnostics
            .iter()
            .find(|d| d.level == level)
            .map(|d| d.occupancy.as_slice())
    }
}

/// Occupancy grid `A[φ][level]`, levels 1-based.
struct Occupancy {
    a: Vec<Vec<u32>>,
}

impl Occupancy {
    fn new(phis: usize, t: usize) -> Self {
        Self {
            a: vec![vec![0; t + 1]; phis],
        }
    }

    fn mark(&mut self, phi: usize, levels: &[usize]) {
        let row = &mut self.a[phi];
        let mut seen: Vec<usize> = levels.to_vec();
        seen.sort_unstable();
        seen.dedup();
        for l in seen {
            if l >= row.len() {
                row.resize(l + 1, 0);
            }
            row[l] += 1;
        }
    }
}

impl SampleLevelSketch {
    /// Finalizes with exact magnitudes of recovered coordinates.
    pub fn finalize_exact(&self, exact: &FxHashMap<u64, i64>) -> LevelEstimate {
        let shape = self.shape();
        let grid = self.grid();
        let mut occ = Occupancy::new(shape.phi_max + 1, grid.levels());
        let mut maps = 0;
        for phi in 1..=shape.phi_max {
            for r in 0..shape.repetitions {
                let map = self.cell_map(phi, r * shape.block);
                maps += 1;
                let levels: Vec<usize> = map
                    .entries
                    .iter()
                    .filter_map(|e| exact.get(&e.index))
                    .map(|v| grid.level_of(v.unsigned_abs()))
                    .filter(|l| *l > 0)
                    .collect();
                occ.mark(phi, &levels);
            }
        }
        self.conclude(occ, &grid, maps, 0, 0)
    }

    /// Finalizes from estimates alone; ambiguous maps are discarded.
    pub fn finalize_one_pass(&self) -> Result<LevelEstimate> {
        let (gamma, x) = match self.classifier() {
            Classifier::Randomized { gamma, x } => (gamma, x),
            Classifier::Exact { .. } => {
                return Err(Error::param("classifier", "one-pass finalize needs a randomized base"))
            }
        };
        let shape = self.shape();
        let base = 1.0 + x * gamma;
        let ln_base = base.ln();
        let grid = self.grid();
        let mut occ = Occupancy::new(shape.phi_max + 1, grid.levels());
        let (mut maps, mut discarded, mut empty) = (0, 0, 0);
        for phi in 1..=shape.phi_max {
            for r in 0..shape.repetitions {
                let mut chosen = None;
                for b in 0..shape.block {
                    let map = self.cell_map(phi, r * shape.block + b);
                    maps += 1;
                    match detected_classes(&map.increasing(), base, ln_base) {
                        Some(levels) => {
                            chosen = Some(levels);
                            break;
                        }
                        None => discarded += 1,
                    }
                }
                match chosen {
                    Some(levels) => occ.mark(phi, &levels),
                    None => empty += 1,
                }
            }
        }
        Ok(self.conclude(occ, &grid, maps, discarded, empty))
    }

    fn conclude(
        &self,
        occ: Occupancy,
        grid: &LevelGrid,
        maps: usize,
        discarded: usize,
        empty: usize,
    ) -> LevelEstimate {
        let shape = self.shape();
        let t = occ.a.iter().map(|row| row.len() - 1).max().unwrap_or(0).max(grid.levels());
        let mut counts = vec![0u64; t];
        let mut raw = vec![0.0; t];
        let mut diagnostics = Vec::new();
        let reps = shape.repetitions as f64;
        for level in 1..=t {
            let column: Vec<u32> = occ
                .a
                .iter()
                .map(|row| row.get(level).copied().unwrap_or(0))
                .collect();
            if column.iter().all(|a| *a == 0) {
                continue;
            }
            let q = (0..column.len())
                .rev()
                .find(|phi| column[*phi] > 0 && column[*phi] as f64 >= shape.threshold);
            let eta = q.map_or(0.0, |q| column[q] as f64 / (reps * (1.0 + shape.eps_prime)));
            let b = match q {
                Some(q) if q > 0 && eta < 1.0 => conversion(eta, 0.5f64.powi(q as i32)).max(0.0),
                _ => 0.0,
            };
            raw[level - 1] = b;
            counts[level - 1] = b.round() as u64;
            diagnostics.push(LevelDiagnostics {
                level,
                q,
                eta,
                occupancy: column,
            });
        }
        LevelEstimate {
            base: grid.base(),
            counts,
            raw,
            classifier: self.classifier(),
            shape: shape.clone(),
            diagnostics,
            maps,
            discarded_maps: discarded,
            empty_blocks: empty,
            counters: self.counter_count(),
        }
    }
}

/// Level classes detected by a map, or `None` if the map must be discarded.
///
/// Entries are visited by increasing estimate; the first entry of each class
/// decides it. A class `w > 1` whose lower boundary sits inside the entry's
/// interval is ambiguous. Classes `w ≤ 1` all mean level 1.
pub(crate) fn detected_classes(
    increasing: &[crate::countsketch::HeavyHitter],
    base: f64,
    ln_base: f64,
) -> Option<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    for e in increasing {
        let (lower, upper) = e.interval();
        let w = (upper.ln() / ln_base).ceil();
        if w <= 1.0 {
            if !out.contains(&1) {
                out.push(1);
            }
            continue;
        }
        let w = w as usize;
        if out.contains(&w) {
            continue;
        }
        if base.powi(w as i32 - 1) >= lower {
            return None;
        }
        out.push(w);
    }
    Some(out)
}
