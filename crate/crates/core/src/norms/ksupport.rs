use super::{check_k, sort_desc, SymmetricNorm, VectorView};
use crate::error::Result;
use crate::Scalar;

/// Sorted-prefix closed form; `mags` is sorted descending in place.
fn ksupport_of<T: Scalar>(mags: &mut [T], k: usize) -> T {
    sort_desc(mags);
    let z = |i: usize| -> T {
        // 1-based, zero past the end
        if i == 0 {
            T::infinity()
        } else {
            mags.get(i - 1).copied().unwrap_or(T::zero())
        }
    };
    let tail_from = |r: usize| -> T {
        mags.iter()
            .skip(k - r - 1)
            .fold(T::zero(), |s, x| s + *x)
    };
    let tol = T::epsilon() * T::of_usize(4 * mags.len().max(1));
    let mut fallback = None;
    for r in 0..k {
        let tail = tail_from(r);
        let avg = tail / T::of_usize(r + 1);
        let upper = z(k - r - 1);
        let lower = z(k - r);
        let slack = tol * avg;
        if upper + slack > avg && avg + slack >= lower {
            let sq = mags
                .iter()
                .take(k - r - 1)
                .fold(T::zero(), |s, x| s + *x * *x);
            return (sq + tail * tail / T::of_usize(r + 1)).sqrt();
        }
        fallback = Some(r);
    }
    let r = fallback.unwrap_or(0);
    let tail = tail_from(r);
    let sq = mags
        .iter()
        .take(k - r - 1)
        .fold(T::zero(), |s, x| s + *x * *x);
    (sq + tail * tail / T::of_usize(r + 1)).sqrt()
}

pub fn eval_ksupport<T: Scalar>(x: &dyn VectorView<T>, k: usize) -> Result<T> {
    check_k(k, x.len())?;
    Ok(ksupport_of(&mut x.magnitudes(), k))
}

/// Gauge of the convex hull of `k`-sparse vectors in the unit `l_2` ball.
#[derive(Clone, Debug)]
pub struct KSupport {
    k: usize,
    n: usize,
}

impl KSupport {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        check_k(k, n)?;
        Ok(Self { k, n })
    }
}

impl<T: Scalar> SymmetricNorm<T> for KSupport {
    fn name(&self) -> String {
        format!("ksupport(k={})", self.k)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        ksupport_of(mags, self.k)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        Some(T::of_usize(k.max(self.k)).sqrt() / T::of_usize(self.k).sqrt())
    }
}
