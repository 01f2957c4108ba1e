use serde::{Deserialize, Serialize};

use crate::countsketch::tracker_capacity;
use crate::error::{Error, Result};

/// Constants that concretize the asymptotic parameter formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelConstants {
    /// Repetitions `R = ⌈c_R · ln(1/δ) · ln²n / ε²⌉`.
    pub c_r: f64,
    /// Per-table heaviness `β_cs = c_β · β / (t · ln(1/δ))`.
    pub c_beta: f64,
    pub c_w: f64,
    pub c_d: f64,
    /// Occupancy threshold `R · ln(1/δ) / (divisor · ln n)`.
    pub occupancy_divisor: f64,
    /// `ε′ / ε` for the hit-rate deflation `A / (R(1+ε′))`.
    pub eps_prime_ratio: f64,
}

impl Default for LevelConstants {
    fn default() -> Self {
        Self {
            c_r: 1.0,
            c_beta: 1.0,
            c_w: 8.0,
            c_d: 3.0,
            occupancy_divisor: 100.0,
            eps_prime_ratio: 0.5,
        }
    }
}

/// Multiplicative factors applied to the derived grid dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabScale {
    pub repetitions: f64,
    pub width: f64,
    pub depth: f64,
    pub block: f64,
    /// Scales the heaviness handed to each table's cover query.
    pub heaviness: f64,
    /// Scales the precision each table must certify for a reported estimate.
    pub precision: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy_divisor: Option<f64>,
}

impl Default for LabScale {
    fn default() -> Self {
        Self {
            repetitions: 1.0,
            width: 1.0,
            depth: 1.0,
            block: 1.0,
            heaviness: 1.0,
            precision: 1.0,
            occupancy_divisor: None,
        }
    }
}

/// Absolute grid dimensions a lab configuration aims for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabTargets {
    pub repetitions: usize,
    pub width: usize,
    pub depth: usize,
    pub block: usize,
    pub table_beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_divisor: Option<f64>,
}

impl LabScale {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Factors that turn the unscaled grid `reference` into `targets`.
    pub fn for_targets(reference: &GridSize, targets: &LabTargets) -> Self {
        Self {
            repetitions: targets.repetitions as f64 / reference.repetitions,
            width: targets.width as f64 / reference.width,
            depth: targets.depth as f64 / reference.depth,
            block: targets.block as f64 / reference.block,
            heaviness: targets.table_beta / reference.table_beta,
            precision: targets.table_eps.map_or(1.0, |e| e / reference.table_eps),
            occupancy_divisor: targets.occupancy_divisor,
        }
    }
}

/// Grid dimensions from the printed formulas, before rounding and lab factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSize {
    pub repetitions: f64,
    pub width: f64,
    pub depth: f64,
    pub block: f64,
    pub table_beta: f64,
    pub table_eps: f64,
}

impl GridSize {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        n: usize,
        t: usize,
        beta: f64,
        eps: f64,
        delta: f64,
        table_eps: f64,
        one_pass: bool,
        c: &LevelConstants,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "need n ≥ 2"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1]"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::param("eps", "must lie in (0, 1)"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        let nf = n as f64;
        let ln_n = nf.ln();
        let ln_inv_delta = (1.0 / delta).ln();
        let delta_cs = delta / nf;
        if delta_cs >= table_eps {
            return Err(Error::param("delta", "per-table failure must stay below its precision"));
        }
        let beta_cs = c.c_beta * beta / (t as f64 * ln_inv_delta);
        let half = table_eps / 2.0;
        Ok(Self {
            repetitions: c.c_r * ln_inv_delta * ln_n * ln_n / (eps * eps),
            width: c.c_w / (half * half * beta_cs),
            depth: c.c_d * (nf / delta_cs).ln(),
            block: if one_pass { (nf * nf / delta).ln() } else { 1.0 },
            table_beta: beta_cs,
            table_eps,
        })
    }
}

/// Concrete grid dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchShape {
    pub n: usize,
    /// Number of levels at the grid's base.
    pub t: usize,
    pub phi_max: usize,
    /// Repetitions `R` that count toward occupancy.
    pub repetitions: usize,
    /// Parallel instances per repetition; the first usable map of a block counts.
    pub block: usize,
    pub depth: usize,
    pub width: usize,
    pub capacity: usize,
    pub table_beta: f64,
    pub table_eps: f64,
    pub threshold: f64,
    pub eps_prime: f64,
}

impl SketchShape {
    pub fn instances(&self) -> usize {
        self.repetitions * self.block
    }

    /// Depth 0 keeps every coordinate, where a hit rate carries no count, so it
    /// holds no table.
    pub fn tables(&self) -> usize {
        self.phi_max * self.instances()
    }

    pub fn counter_count(&self) -> usize {
        self.tables().saturating_mul(self.depth).saturating_mul(self.width)
    }

    /// Applies the printed formulas, then the lab factors.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        n: usize,
        t: usize,
        beta: f64,
        eps: f64,
        delta: f64,
        table_eps: f64,
        one_pass: bool,
        c: &LevelConstants,
        lab: &LabScale,
    ) -> Result<Self> {
        let raw = GridSize::compute(n, t, beta, eps, delta, table_eps, one_pass, c)?;
        let nf = n as f64;
        let phi_max = (nf.log2().ceil() as usize).max(1);
        if phi_max > 31 {
            return Err(Error::param("n", "dimension above 2^31 is unsupported"));
        }
        let positive = |x: f64| -> usize {
            if x.is_finite() {
                ((x - 1e-9).ceil() as usize).max(1)
            } else {
                usize::MAX
            }
        };
        let repetitions = positive(raw.repetitions * lab.repetitions);
        let block = if one_pass { positive(raw.block * lab.block) } else { 1 };
        let table_beta = (raw.table_beta * lab.heaviness).min(1.0);
        let divisor = lab.occupancy_divisor.unwrap_or(c.occupancy_divisor);
        let threshold = repetitions as f64 * (1.0 / delta).ln() / (divisor * nf.ln());
        Ok(Self {
            n,
            t,
            phi_max,
            repetitions,
            block,
            depth: positive(raw.depth * lab.depth),
            width: positive(raw.width * lab.width),
            capacity: tracker_capacity(table_beta),
            table_beta,
            table_eps: table_eps * lab.precision,
            threshold,
            eps_prime: c.eps_prime_ratio * eps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_formulas() {
        let c = LevelConstants::default();
        let s = SketchShape::derive(1024, 12, 0.1, 0.2, 0.01, 0.1, false, &c, &LabScale::default())
            .unwrap();
        let ln_n = 1024f64.ln();
        let l = 100f64.ln();
        assert_eq!(s.phi_max, 10);
        assert_eq!(s.repetitions, (l * ln_n * ln_n / 0.04).ceil() as usize);
        assert_eq!(s.block, 1);
        assert!((s.threshold - s.repetitions as f64 * l / (100.0 * ln_n)).abs() < 1e-9);
        let beta_cs = 0.1 / (12.0 * l);
        assert_eq!(s.width, (8.0 / (0.05 * 0.05 * beta_cs)).ceil() as usize);
        assert!((s.eps_prime - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lab_targets_are_hit() {
        let c = LevelConstants::default();
        let reference = GridSize::compute(4096, 30, 0.05, 0.2, 1e-4, 0.01, true, &c).unwrap();
        let targets = LabTargets {
            repetitions: 200,
            width: 128,
            depth: 5,
            block: 2,
            table_beta: 0.05,
            table_eps: Some(0.02),
            occupancy_divisor: Some(4.0),
        };
        let lab = LabScale::for_targets(&reference, &targets);
        let s = SketchShape::derive(4096, 30, 0.05, 0.2, 1e-4, 0.01, true, &c, &lab).unwrap();
        assert_eq!(s.repetitions, 200);
        assert_eq!(s.width, 128);
        assert_eq!(s.depth, 5);
        assert_eq!(s.block, 2);
        assert!((s.table_beta - 0.05).abs() < 1e-12);
        assert!((s.table_eps - 0.02).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        let c = LevelConstants::default();
        let lab = LabScale::default();
        assert!(SketchShape::derive(1, 5, 0.1, 0.2, 0.01, 0.1, false, &c, &lab).is_err());
        assert!(SketchShape::derive(100, 5, 0.0, 0.2, 0.01, 0.1, false, &c, &lab).is_err());
        assert!(SketchShape::derive(100, 5, 0.1, 1.5, 0.01, 0.1, false, &c, &lab).is_err());
        assert!(SketchShape::derive(100, 5, 0.1, 0.2, 0.0, 0.1, false, &c, &lab).is_err());
    }
}
