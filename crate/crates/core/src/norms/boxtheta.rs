use super::{sort_desc, SymmetricNorm, VectorView};
use crate::error::{Error, Result};
use crate::Scalar;

fn check<T: Scalar>(a: T, b: T, c: T, n: usize) -> Result<()> {
    if !(a > T::zero() && a < b && b <= c) {
        return Err(Error::param("a,b,c", "need 0 < a < b ≤ c"));
    }
    if T::of_usize(n) * a > c {
        return Err(Error::param("a", format!("n·a exceeds the budget c at n = {n}")));
    }
    Ok(())
}

/// Greedy weights: every coordinate gets `a`, then the leftover budget goes to the
/// largest magnitudes, at most `b - a` each. `mags` is sorted descending in place.
fn raw<T: Scalar>(mags: &mut [T], a: T, b: T, c: T, n: usize) -> T {
    sort_desc(mags);
    let mut budget = c - T::of_usize(n) * a;
    let mut acc = T::zero();
    for x in mags.iter() {
        let extra = budget.min(b - a).max(T::zero());
        budget = budget - extra;
        acc = acc + (a + extra) * *x * *x;
    }
    acc.sqrt()
}

/// Unnormalized `max_θ (Σ θ_i x_i²)^{1/2}`, with `n` taken from the view length.
pub fn eval_boxtheta_dual<T: Scalar>(x: &dyn VectorView<T>, a: T, b: T, c: T) -> Result<T> {
    check(a, b, c, x.len())?;
    Ok(raw(&mut x.magnitudes(), a, b, c, x.len()))
}

/// Dual box-Θ norm rescaled so `l(e_i) = 1`.
#[derive(Clone, Debug)]
pub struct BoxThetaDual<T> {
    a: T,
    b: T,
    c: T,
    n: usize,
    scale: T,
}

impl<T: Scalar> BoxThetaDual<T> {
    pub fn new(a: T, b: T, c: T, n: usize) -> Result<Self> {
        check(a, b, c, n)?;
        let scale = raw(&mut [T::one()], a, b, c, n);
        Ok(Self { a, b, c, n, scale })
    }
}

impl<T: Scalar> SymmetricNorm<T> for BoxThetaDual<T> {
    fn name(&self) -> String {
        format!("boxtheta_dual(a={},b={},c={})", self.a, self.b, self.c)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        raw(mags, self.a, self.b, self.c, self.n) / self.scale
    }

    fn closed_form_max(&self, _k: usize) -> Option<T> {
        Some(T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{eval_lp, Exponent};

    /// Maximizes Σθ_i x_i² over θ ∈ [a,b]^n with Σθ ≤ c on a 1e-3 grid (n = 2).
    fn grid_oracle(x: [f64; 2], a: f64, b: f64, c: f64) -> f64 {
        let steps = ((b - a) / 1e-3).round() as usize;
        let mut best = 0.0f64;
        for i in 0..=steps {
            let t0 = a + (b - a) * i as f64 / steps as f64;
            let t1 = (c - t0).min(b);
            if t1 < a - 1e-12 {
                continue;
            }
            best = best.max(t0 * x[0] * x[0] + t1 * x[1] * x[1]);
        }
        best.sqrt()
    }

    #[test]
    fn examples() {
        assert_eq!(eval_boxtheta_dual(&vec![1.0, 0.0], 0.5, 1.0, 1.5).unwrap(), 1.0);
        assert_eq!(eval_boxtheta_dual(&vec![0.0, 0.0], 0.5, 1.0, 1.5).unwrap(), 0.0);
        let x = vec![1.0, -2.0, 0.5];
        let open = eval_boxtheta_dual(&x, 0.2, 0.7, 5.0).unwrap();
        let l2 = eval_lp(&x, Exponent::Finite(2.0)).unwrap();
        assert!((open - 0.7f64.sqrt() * l2).abs() < 1e-12);
    }

    #[test]
    fn greedy_matches_grid() {
        for x in [[1.0, 0.0], [0.3, 2.0], [1.5, 1.5], [-0.7, 0.2]] {
            for (a, b, c) in [(0.5, 1.0, 1.5), (0.1, 0.9, 1.0), (0.25, 0.75, 1.2)] {
                let got = eval_boxtheta_dual(&x.to_vec(), a, b, c).unwrap();
                let want = grid_oracle(x, a, b, c);
                assert!((got - want).abs() < 1e-6, "{x:?} {a} {b} {c}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BoxThetaDual::new(0.5, 0.4, 1.0, 2).is_err());
        assert!(BoxThetaDual::new(0.0, 0.4, 1.0, 2).is_err());
        assert!(BoxThetaDual::new(0.5, 1.0, 1.5, 4).is_err());
    }

    #[test]
    fn normalized_on_basis() {
        let norm = BoxThetaDual::<f64>::new(0.1, 1.0, 2.0, 5).unwrap();
        let mut e = vec![0.0; 5];
        e[3] = -1.0;
        assert!((norm.eval(&e) - 1.0).abs() < 1e-12);
    }
}
