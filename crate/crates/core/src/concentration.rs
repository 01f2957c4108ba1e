//! Monte-Carlo profile of how a norm concentrates on the unit sphere.
//!
//! For each dimension `k` on a geometric grid we estimate the median of
//! `l^{(k)}` under the uniform measure on `S^{k-1}`, its maximum on the sphere,
//! and their ratio. The largest ratio over the grid calibrates sketch sizes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::SymmetricNorm;
use crate::{seed, Scalar};

pub const DEFAULT_SAMPLES: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint<T> {
    pub k: usize,
    pub median: T,
    pub max: T,
    pub mc: T,
    /// The max came from search rather than a closed form, so it may be low.
    pub heuristic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationProfile<T> {
    pub norm: String,
    pub n: usize,
    pub samples_per_k: usize,
    pub seed: u64,
    pub points: Vec<ProfilePoint<T>>,
    pub mmc: T,
    pub heuristic: bool,
}

impl<T: Scalar> ConcentrationProfile<T> {
    /// Grid dimension where the ratio peaks.
    pub fn peak_k(&self) -> usize {
        self.points
            .iter()
            .max_by(|a, b| a.mc.partial_cmp(&b.mc).unwrap_or(std::cmp::Ordering::Equal))
            .map(|p| p.k)
            .unwrap_or(1)
    }

    pub fn point(&self, k: usize) -> Option<&ProfilePoint<T>> {
        self.points.iter().find(|p| p.k == k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxEstimate<T> {
    pub value: T,
    pub heuristic: bool,
}

/// Uniform point on `S^{k-1}` as magnitudes.
fn sphere_point<T: Scalar, R: Rng>(rng: &mut R, k: usize, buf: &mut Vec<T>) {
    buf.clear();
    let mut raw = Vec::with_capacity(k);
    let sq = loop {
        raw.clear();
        let mut sq = 0.0f64;
        for _ in 0..k {
            let g: f64 = rng.sample(StandardNormal);
            sq += g * g;
            raw.push(g);
        }
        if sq > 0.0 {
            break sq;
        }
    };
    let inv = sq.sqrt().recip();
    buf.extend(raw.iter().map(|g| T::of((g * inv).abs())));
}

fn median_of<T: Scalar>(mut xs: Vec<T>) -> T {
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / T::of(2.0)
    }
}

/// Sample median of `l^{(k)}` over `samples` uniform sphere points.
pub fn estimate_median<T: Scalar>(
    l: &dyn SymmetricNorm<T>,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<T> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if samples < 100 {
        return Err(Error::param("samples", format!("need at least 100, got {samples}")));
    }
    let mut rng = seed::rng(seed);
    let mut buf = Vec::with_capacity(k);
    let values = (0..samples)
        .map(|_| {
            sphere_point(&mut rng, k, &mut buf);
            l.eval_magnitudes(&mut buf)
        })
        .collect();
    Ok(median_of(values))
}

fn xi<T: Scalar>(j: usize) -> Vec<T> {
    vec![T::of_usize(j).sqrt().recip(); j]
}

/// Best `l(ξ^{(j)})` over `1 ≤ j ≤ k`, then pairwise rotations on the sphere.
pub fn heuristic_max<T: Scalar>(l: &dyn SymmetricNorm<T>, k: usize) -> T {
    let mut best_j = 1;
    let mut best = T::zero();
    for j in 1..=k {
        let v = l.eval_magnitudes(&mut xi(j));
        if v > best {
            best = v;
            best_j = j;
        }
    }
    if k < 2 {
        return best;
    }
    let mut x: Vec<T> = xi(best_j);
    x.resize(k, T::zero());
    let mut rng = seed::rng(seed::derive_named(k as u64, "concentration", "ascent", best_j as u64));
    let mut theta = 0.25f64;
    let pairs = (2 * k).min(64);
    for _ in 0..30 {
        let mut improved = false;
        for _ in 0..pairs {
            let i = rng.random_range(0..k);
            let j = rng.random_range(0..k);
            if i == j {
                continue;
            }
            for dir in [theta, -theta] {
                let (s, c) = dir.sin_cos();
                let (a, b) = (x[i].f64(), x[j].f64());
                let mut y = x.clone();
                y[i] = T::of(c * a - s * b);
                y[j] = T::of(s * a + c * b);
                let mut mags: Vec<T> = y.iter().map(|v| v.abs()).collect();
                let v = l.eval_magnitudes(&mut mags);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            theta /= 2.0;
        }
    }
    best
}

/// Maximum of `l^{(k)}` on the sphere: closed form when the norm has one.
pub fn estimate_max<T: Scalar>(l: &dyn SymmetricNorm<T>, k: usize) -> MaxEstimate<T> {
    match l.closed_form_max(k) {
        Some(value) => MaxEstimate {
            value,
            heuristic: false,
        },
        None => MaxEstimate {
            value: heuristic_max(l, k),
            heuristic: true,
        },
    }
}

/// Powers of two up to `n` plus `n`, or `points` geometric points from 1 to `n`.
pub fn dimension_grid(n: usize, points: Option<usize>) -> Vec<usize> {
    let n = n.max(1);
    let mut grid: Vec<usize> = match points {
        None => std::iter::successors(Some(1usize), |k| k.checked_mul(2))
            .take_while(|k| *k <= n)
            .collect(),
        Some(g) => {
            let g = g.max(2);
            (0..g)
                .map(|i| ((n as f64).powf(i as f64 / (g - 1) as f64)).round() as usize)
                .collect()
        }
    };
    grid.push(1);
    grid.push(n);
    grid.sort_unstable();
    grid.dedup();
    grid
}

pub fn compute_mmc<T: Scalar>(
    l: &dyn SymmetricNorm<T>,
    n: usize,
    grid_size: Option<usize>,
    samples: usize,
    seed: u64,
) -> Result<ConcentrationProfile<T>> {
    let grid = dimension_grid(n, grid_size);
    let points = grid
        .par_iter()
        .map(|&k| -> Result<ProfilePoint<T>> {
            let sub = seed::derive_named(seed, "concentration", "k", k as u64);
            let median = estimate_median(l, k, samples, sub)?;
            let max = estimate_max(l, k);
            Ok(ProfilePoint {
                k,
                median,
                max: max.value,
                mc: max.value / median,
                heuristic: max.heuristic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mmc = points.iter().fold(T::zero(), |m, p| m.max(p.mc));
    let heuristic = points.iter().any(|p| p.heuristic);
    Ok(ConcentrationProfile {
        norm: l.name(),
        n,
        samples_per_k: samples,
        seed,
        points,
        mmc,
        heuristic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{Lp, MaxCombo, TopK};

    #[test]
    fn l2_is_constant() {
        let l2 = Lp::<f64>::new(2.0, 64).unwrap();
        let m = estimate_median(&l2, 17, 200, 1).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
        let prof = compute_mmc(&l2, 64, None, 200, 1).unwrap();
        assert!((prof.mmc - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parameter_checks() {
        let l2 = Lp::<f64>::new(2.0, 8).unwrap();
        assert!(estimate_median(&l2, 0, 200, 1).is_err());
        assert!(estimate_median(&l2, 4, 99, 1).is_err());
    }

    #[test]
    fn grid_shape() {
        assert_eq!(dimension_grid(10, None), vec![1, 2, 4, 8, 10]);
        assert_eq!(dimension_grid(16, None), vec![1, 2, 4, 8, 16]);
        assert_eq!(dimension_grid(1000, Some(4)), vec![1, 10, 100, 1000]);
    }

    #[test]
    fn closed_form_maxima() {
        let l4 = Lp::<f64>::new(4.0, 64).unwrap();
        assert_eq!(estimate_max(&l4, 32).value, 1.0);
        let top = TopK::new(8, 64).unwrap();
        let m = estimate_max::<f64>(&top, 32);
        assert!(!m.heuristic);
        assert!((m.value - 8f64.sqrt()).abs() < 1e-12);
    }

    struct Opaque(TopK);

    impl SymmetricNorm<f64> for Opaque {
        fn name(&self) -> String {
            "opaque".into()
        }
        fn dim(&self) -> usize {
            SymmetricNorm::<f64>::dim(&self.0)
        }
        fn eval_magnitudes(&self, mags: &mut [f64]) -> f64 {
            self.0.eval_magnitudes(mags)
        }
    }

    #[test]
    fn heuristic_max_finds_topk_peak() {
        let norm = Opaque(TopK::new(5, 40).unwrap());
        let m = estimate_max(&norm, 40);
        assert!(m.heuristic);
        assert!((m.value - 5f64.sqrt()).abs() < 1e-9);
        let l1_like = Opaque(TopK::new(40, 40).unwrap());
        assert!((heuristic_max(&l1_like, 30) - 30f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn profile_is_seed_deterministic() {
        let norm = MaxCombo::new(256);
        let a = compute_mmc::<f64>(&norm, 256, None, 300, 5).unwrap();
        let b = compute_mmc::<f64>(&norm, 256, None, 300, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| p.mc >= 1.0 - 1e-9));
    }
}
