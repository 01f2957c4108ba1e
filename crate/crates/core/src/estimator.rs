//! Norm estimates from a recovered level vector.

use serde::{Deserialize, Serialize};

use crate::concentration::{estimate_max, ConcentrationProfile};
use crate::error::{Error, Result};
use crate::level::{exact_level_vector, LevelVector};
use crate::levels::{level1, one_pass_lab, LabScale, LabTargets, LevelConstants, LevelEstimate};
use crate::norms::{SymmetricNorm, VectorView};
use crate::stream::{default_bound, FrequencyVector, StreamUpdate};
use crate::Scalar;

/// Where the concentration constant comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MmcInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiled: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl MmcInput {
    pub fn bound(mmc: f64) -> Self {
        Self {
            profiled: None,
            bound: Some(mmc),
        }
    }

    pub fn from_profile<T: Scalar>(p: &ConcentrationProfile<T>) -> Self {
        Self {
            profiled: Some(p.mmc.f64()),
            bound: None,
        }
    }

    /// Larger of the two sources.
    pub fn raw(&self) -> Result<f64> {
        match (self.profiled, self.bound) {
            (None, None) => Err(Error::MmcUnavailable),
            (a, b) => Ok(a.unwrap_or(0.0).max(b.unwrap_or(0.0)).max(1.0)),
        }
    }
}

fn default_safety() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub eps: f64,
    /// Defaults to `0.01·ε/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub mmc: MmcInput,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub c3: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub constants: LevelConstants,
    #[serde(default)]
    pub lab: LabScale,
    /// Fixed offset for the randomized base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(eps: f64, mmc: MmcInput) -> Self {
        Self {
            eps,
            delta: None,
            mmc,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            safety: 2.0,
            constants: LevelConstants::default(),
            lab: LabScale::default(),
            x: None,
        }
    }

    pub fn derive(&self, n: usize) -> Result<DerivedParams> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps", "must lie in (0, 1)"));
        }
        if n < 2 {
            return Err(Error::param("n", "need n ≥ 2"));
        }
        let ln_n = (n as f64).ln();
        let mmc = self.mmc.raw()? * self.safety;
        let eps = self.eps;
        let eps_prime = self.c1 * eps * eps / ln_n;
        if !(eps_prime > 0.0 && eps_prime < eps) {
            return Err(Error::param("c1", format!("derived ε′ = {eps_prime} must lie in (0, ε)")));
        }
        let beta_prime = (self.c2 * eps.powi(5) / (mmc * mmc * ln_n.powi(5))).min(1.0);
        let gamma = self.c3 * eps;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param("c3", format!("derived γ = {gamma} must lie in (0, 1)")));
        }
        Ok(DerivedParams {
            n,
            eps_prime,
            beta_prime,
            gamma,
            delta: self.delta.unwrap_or(0.01 * eps / n as f64),
            mmc,
        })
    }
}

/// Offset used to size lab factors when `x` is left to the seed.
const REFERENCE_OFFSET: f64 = 0.75;

impl EstimatorConfig {
    /// Sets `lab` so the grid at dimension `n` lands on `targets`.
    pub fn with_lab_targets(mut self, n: usize, targets: &LabTargets) -> Result<Self> {
        let p = self.derive(n)?;
        let x = self.x.unwrap_or(REFERENCE_OFFSET);
        self.lab = one_pass_lab(n, p.gamma, p.beta_prime, p.eps_prime, p.delta, x, &self.constants, targets)?;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub n: usize,
    pub eps_prime: f64,
    pub beta_prime: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Calibrated value, safety factor included.
    pub mmc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub estimate: f64,
    pub params: DerivedParams,
    pub levels: LevelEstimate,
    /// Lowest levels were dropped because the counts overflowed `n`.
    pub truncated: bool,
}

/// Caps the total count at `n`, dropping from the lowest level up.
pub(crate) fn fit_to_dimension(lv: &mut LevelVector<f64>, n: usize) -> bool {
    let mut excess = lv.total().saturating_sub(n as u64);
    let truncated = excess > 0;
    for c in lv.counts.iter_mut() {
        if excess == 0 {
            break;
        }
        let cut = (*c).min(excess);
        *c -= cut;
        excess -= cut;
    }
    truncated
}

fn check_bound(levels: &LevelEstimate, n: usize) -> Result<()> {
    let m = default_bound(n);
    let t = crate::level::level_count(levels.base, m);
    if let Some(pos) = levels.counts.iter().skip(t).position(|c| *c > 0) {
        let level = t + pos + 1;
        return Err(Error::MagnitudeBound {
            index: 0,
            magnitude: levels.base.powi(level as i32 - 1) as u128,
            bound: m,
        });
    }
    Ok(())
}

fn norm_of_levels<T: Scalar>(l: &dyn SymmetricNorm<T>, lv: &LevelVector<f64>, n: usize) -> Result<f64> {
    let typed = LevelVector {
        base: T::of(lv.base),
        counts: lv.counts.clone(),
    };
    let view = typed.view(n)?;
    Ok(l.eval(&view).f64())
}

/// One pass over the stream, then the norm of the recovered level vector.
pub fn one_pass_symmetric_norm<T: Scalar>(
    updates: &[StreamUpdate],
    l: &dyn SymmetricNorm<T>,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<NormEstimate> {
    let n = l.dim();
    let params = cfg.derive(n)?;
    let levels = level1(
        updates,
        n,
        params.gamma,
        params.beta_prime,
        params.eps_prime,
        params.delta,
        cfg.x,
        &cfg.constants,
        &cfg.lab,
        seed,
    )?;
    check_bound(&levels, n)?;
    let mut lv = levels.level_vector();
    let truncated = fit_to_dimension(&mut lv, n);
    let estimate = norm_of_levels(l, &lv, n)?;
    Ok(NormEstimate {
        estimate,
        params,
        levels,
        truncated,
    })
}

/// `min(D · l(ξ^{(k)}), max of l^{(k)} on the sphere)`.
pub fn h_xi<T: Scalar>(l: &dyn SymmetricNorm<T>, k: usize, d: f64) -> T {
    if k == 0 {
        return T::zero();
    }
    let mut xi = vec![T::of_usize(k).sqrt().recip(); k];
    let at_xi = l.eval_magnitudes(&mut xi);
    (T::of(d) * at_xi).min(estimate_max(l, k).value)
}

/// Default recentring constant, fitted on random calibration streams across norms.
pub const DEFAULT_RECENTRE: f64 = 1.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    #[serde(rename = "D")]
    pub d: f64,
    /// Level precision; a constant below 1/2.
    #[serde(default = "default_level_eps")]
    pub eps: f64,
    /// Base offset `γ` for `α′ = 1 + xγ`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub mmc: MmcInput,
    #[serde(default = "one")]
    pub c4: f64,
    #[serde(default = "one")]
    pub c5: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_recentre")]
    pub recentre: f64,
    #[serde(default)]
    pub constants: LevelConstants,
    #[serde(default)]
    pub lab: LabScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

fn default_level_eps() -> f64 {
    0.25
}

fn default_gamma() -> f64 {
    0.5
}

fn default_recentre() -> f64 {
    DEFAULT_RECENTRE
}

impl TradeoffConfig {
    pub fn new(d: f64, mmc: MmcInput) -> Self {
        Self {
            d,
            eps: default_level_eps(),
            gamma: default_gamma(),
            delta: None,
            mmc,
            c4: 1.0,
            c5: 1.0,
            safety: 2.0,
            recentre: DEFAULT_RECENTRE,
            constants: LevelConstants::default(),
            lab: LabScale::default(),
            x: None,
        }
    }

    /// `(β, β′)` for dimension `n`.
    pub fn betas(&self, n: usize) -> Result<(f64, f64)> {
        let raw = self.mmc.raw()?;
        if !(self.d >= 1.1 && self.d <= raw) {
            return Err(Error::param("D", format!("must lie in [1.1, {raw}], got {}", self.d)));
        }
        let ln_n = (n.max(2) as f64).ln();
        let mmc = raw * self.safety;
        let beta = (self.c4 / ln_n).min(1.0);
        let beta_prime = (self.c5 * self.d * self.d * beta * beta / (ln_n * ln_n * mmc * mmc)).min(1.0);
        Ok((beta, beta_prime))
    }
}

impl TradeoffConfig {
    pub fn with_lab_targets(mut self, n: usize, targets: &LabTargets) -> Result<Self> {
        let (_, beta_prime) = self.betas(n)?;
        let delta = self.delta.unwrap_or(0.01 * self.eps / n as f64);
        let x = self.x.unwrap_or(REFERENCE_OFFSET);
        self.lab = one_pass_lab(n, self.gamma, beta_prime, self.eps, delta, x, &self.constants, targets)?;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffEstimate {
    /// `Σ_i h(ξ^{(b̂_i)}) · l_2(V̂_i)`.
    pub raw: f64,
    /// `raw / √(D · λ · ln n)`.
    pub recentred: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub counters: usize,
    /// Slack for evaluating `h` at a recovered rather than true level size.
    pub half_support_slack: f64,
    pub levels: LevelEstimate,
    pub truncated: bool,
}

pub fn tradeoff_estimate<T: Scalar>(
    updates: &[StreamUpdate],
    l: &dyn SymmetricNorm<T>,
    tcfg: &TradeoffConfig,
    seed: u64,
) -> Result<TradeoffEstimate> {
    let n = l.dim();
    let (beta, beta_prime) = tcfg.betas(n)?;
    let delta = tcfg.delta.unwrap_or(0.01 * tcfg.eps / n as f64);
    let levels = level1(
        updates,
        n,
        tcfg.gamma,
        beta_prime,
        tcfg.eps,
        delta,
        tcfg.x,
        &tcfg.constants,
        &tcfg.lab,
        seed,
    )?;
    check_bound(&levels, n)?;
    let mut lv = levels.level_vector();
    let truncated = fit_to_dimension(&mut lv, n);
    let raw = h_sum(l, &lv, tcfg.d);
    let ln_n = (n.max(2) as f64).ln();
    Ok(TradeoffEstimate {
        raw,
        recentred: raw / (tcfg.d * tcfg.recentre * ln_n).sqrt(),
        beta,
        beta_prime,
        counters: levels.counters,
        half_support_slack: 2.0,
        levels,
        truncated,
    })
}

/// `Σ_i h(ξ^{(b_i)}) · α^i · √b_i` over a level vector.
pub fn h_sum<T: Scalar>(l: &dyn SymmetricNorm<T>, lv: &LevelVector<f64>, d: f64) -> f64 {
    lv.counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, c)| {
            let k = *c as usize;
            h_xi(l, k, d).f64() * lv.base.powi(i as i32 + 1) * (k as f64).sqrt()
        })
        .sum()
}

/// Levels that contribute at least `β · l(V)` but fail the importance test at `β′`.
pub fn calibration_failures<T: Scalar>(
    v: &FrequencyVector,
    l: &dyn SymmetricNorm<T>,
    base: f64,
    beta: f64,
    beta_prime: f64,
) -> Result<Vec<usize>> {
    let lv = exact_level_vector(v, base)?;
    let n = v.n();
    let whole = norm_of_levels(l, &lv, n)?;
    let mut out = Vec::new();
    for level in 1..=lv.t() {
        if lv.counts[level - 1] == 0 {
            continue;
        }
        let part = norm_of_levels(l, &lv.only_level(level), n)?;
        if part >= beta * whole && !lv.is_important(level, beta_prime) {
            out.push(level);
        }
    }
    Ok(out)
}

/// Exact norm of the stream vector, for comparison.
pub fn exact_norm<T: Scalar>(v: &FrequencyVector, l: &dyn SymmetricNorm<T>) -> f64 {
    l.eval(v as &dyn VectorView<T>).f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{Lp, TopK};

    #[test]
    fn derived_parameters() {
        let cfg = EstimatorConfig::new(0.2, MmcInput::bound(1.0));
        let p = cfg.derive(10_000).unwrap();
        let ln_n = 10_000f64.ln();
        assert!((p.eps_prime - 0.04 / ln_n).abs() < 1e-15);
        assert!((p.beta_prime - 0.2f64.powi(5) / (4.0 * ln_n.powi(5))).abs() < 1e-18);
        assert!((p.gamma - 0.2).abs() < 1e-15);
        assert!((p.delta - 0.01 * 0.2 / 10_000.0).abs() < 1e-18);
        assert_eq!(p.mmc, 2.0);
    }

    #[test]
    fn mmc_is_required() {
        let cfg = EstimatorConfig::new(0.2, MmcInput::default());
        assert!(matches!(cfg.derive(100), Err(Error::MmcUnavailable)));
        let both = MmcInput {
            profiled: Some(3.0),
            bound: Some(5.0),
        };
        assert_eq!(both.raw().unwrap(), 5.0);
    }

    #[test]
    fn eps_prime_must_stay_below_eps() {
        let mut cfg = EstimatorConfig::new(0.2, MmcInput::bound(1.0));
        cfg.c1 = 1000.0;
        assert!(cfg.derive(100).is_err());
    }

    #[test]
    fn h_closed_forms() {
        let n = 256;
        let linf = Lp::<f64>::new(f64::INFINITY, n).unwrap();
        for k in [1usize, 4, 16, 100] {
            let want = (4.0 / (k as f64).sqrt()).min(1.0);
            assert!((h_xi(&linf, k, 4.0) - want).abs() < 1e-12);
        }
        let l1 = Lp::<f64>::new(1.0, n).unwrap();
        for k in [1usize, 9, 64] {
            for d in [1.0, 3.0] {
                assert!((h_xi(&l1, k, d) - (k as f64).sqrt()).abs() < 1e-9);
            }
        }
        let top = TopK::new(5, n).unwrap();
        for k in [1usize, 3, 50] {
            let h = h_xi::<f64>(&top, k, 1.0);
            let mut xi = vec![1.0 / (k as f64).sqrt(); k];
            assert!(h <= top.eval_magnitudes(&mut xi) + 1e-12);
            assert!(h <= estimate_max::<f64>(&top, k).value + 1e-12);
        }
    }

    #[test]
    fn single_level_h_term() {
        let n = 1024;
        let linf = Lp::<f64>::new(f64::INFINITY, n).unwrap();
        let (k, m) = (64usize, 3.0f64);
        let mut counts = vec![0u64; 4];
        counts[2] = k as u64;
        let lv = LevelVector::new(m.cbrt(), counts).unwrap();
        let got = h_sum(&linf, &lv, 4.0);
        let want = (4.0 * m).min(m * (k as f64).sqrt());
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn tradeoff_rejects_out_of_range_d() {
        let t = TradeoffConfig::new(1.0, MmcInput::bound(8.0));
        assert!(t.betas(1000).is_err());
        let t = TradeoffConfig::new(9.0, MmcInput::bound(8.0));
        assert!(t.betas(1000).is_err());
        let (b, bp) = TradeoffConfig::new(4.0, MmcInput::bound(8.0)).betas(1000).unwrap();
        let ln_n = 1000f64.ln();
        assert!((b - 1.0 / ln_n).abs() < 1e-15);
        assert!((bp - 16.0 * b * b / (ln_n * ln_n * 256.0)).abs() < 1e-15);
    }

    #[test]
    fn truncation_drops_lowest_levels() {
        let mut lv = LevelVector::new(2.0, vec![5, 3, 2]).unwrap();
        assert!(fit_to_dimension(&mut lv, 6));
        assert_eq!(lv.counts, vec![1, 3, 2]);
        assert!(!fit_to_dimension(&mut lv, 6));
    }
}
