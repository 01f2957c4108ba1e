use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_k, SymmetricNorm, VectorView};
use crate::error::{Error, Result};
use crate::{BoxedNorm, Scalar};

/// `p ≥ 1` or `∞`; serialized as a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl From<f64> for Exponent {
    fn from(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Infinity
        } else {
            Exponent::Finite(p)
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(Exponent::from(p)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(Exponent::Infinity),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

fn lp_of<T: Scalar>(mags: &[T], p: Exponent) -> T {
    let max = mags.iter().fold(T::zero(), |m, x| m.max(*x));
    match p {
        Exponent::Infinity => max,
        Exponent::Finite(p) if p == 1.0 => mags.iter().fold(T::zero(), |s, x| s + *x),
        Exponent::Finite(p) => {
            if max == T::zero() {
                return T::zero();
            }
            let pt = T::of(p);
            let s = mags.iter().fold(T::zero(), |s, x| s + (*x / max).powf(pt));
            max * s.powf(pt.recip())
        }
    }
}

pub fn eval_lp<T: Scalar>(x: &dyn VectorView<T>, p: Exponent) -> Result<T> {
    if let Exponent::Finite(q) = p {
        if !(q >= 1.0) {
            return Err(Error::param("p", format!("must be at least 1, got {q}")));
        }
    }
    Ok(lp_of(&x.magnitudes(), p))
}

#[derive(Clone, Debug)]
pub struct Lp<T> {
    p: Exponent,
    n: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> Lp<T> {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        Self::with_exponent(Exponent::from(p), n)
    }

    pub fn with_exponent(p: Exponent, n: usize) -> Result<Self> {
        if let Exponent::Finite(q) = p {
            if !(q >= 1.0) {
                return Err(Error::param("p", format!("must be at least 1, got {q}")));
            }
        }
        Ok(Self {
            p,
            n,
            _t: std::marker::PhantomData,
        })
    }

    pub fn exponent(&self) -> Exponent {
        self.p
    }
}

impl<T: Scalar> SymmetricNorm<T> for Lp<T> {
    fn name(&self) -> String {
        format!("lp(p={})", self.p)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        lp_of(mags, self.p)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        let e = match self.p {
            Exponent::Infinity => 0.0,
            Exponent::Finite(p) => (1.0 / p - 0.5).max(0.0),
        };
        Some(T::of((k as f64).powf(e)))
    }
}

fn top_sum<T: Scalar>(mags: &mut [T], k: usize) -> T {
    if k < mags.len() {
        mags.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        mags[..k].iter().fold(T::zero(), |s, x| s + *x)
    } else {
        mags.iter().fold(T::zero(), |s, x| s + *x)
    }
}

pub fn eval_topk<T: Scalar>(x: &dyn VectorView<T>, k: usize) -> Result<T> {
    check_k(k, x.len())?;
    Ok(top_sum(&mut x.magnitudes(), k))
}

/// Sum of the `k` largest magnitudes.
#[derive(Clone, Debug)]
pub struct TopK {
    k: usize,
    n: usize,
}

impl TopK {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        check_k(k, n)?;
        Ok(Self { k, n })
    }
}

impl<T: Scalar> SymmetricNorm<T> for TopK {
    fn name(&self) -> String {
        format!("topk(k={})", self.k)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        top_sum(mags, self.k)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        Some(T::of_usize(k.min(self.k)).sqrt())
    }
}

fn dual_topk<T: Scalar>(mags: &[T], k: usize) -> T {
    let (max, sum) = mags
        .iter()
        .fold((T::zero(), T::zero()), |(m, s), x| (m.max(*x), s + *x));
    max.max(sum / T::of_usize(k))
}

pub fn eval_topk_dual<T: Scalar>(x: &dyn VectorView<T>, k: usize) -> Result<T> {
    check_k(k, x.len())?;
    Ok(dual_topk(&x.magnitudes(), k))
}

/// `max(l_∞, l_1 / k)`, the dual of [`TopK`].
#[derive(Clone, Debug)]
pub struct TopKDual {
    k: usize,
    n: usize,
}

impl TopKDual {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        check_k(k, n)?;
        Ok(Self { k, n })
    }
}

impl<T: Scalar> SymmetricNorm<T> for TopKDual {
    fn name(&self) -> String {
        format!("topk_dual(k={})", self.k)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        dual_topk(mags, self.k)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        Some(T::one().max(T::of_usize(k).sqrt() / T::of_usize(self.k)))
    }
}

/// `max(l_∞, l_1 / √n)` with `n` the ambient dimension.
pub fn eval_maxcombo<T: Scalar>(x: &dyn VectorView<T>) -> T {
    dual_topk_sqrt(&x.magnitudes(), x.len())
}

fn dual_topk_sqrt<T: Scalar>(mags: &[T], n: usize) -> T {
    let (max, sum) = mags
        .iter()
        .fold((T::zero(), T::zero()), |(m, s), x| (m.max(*x), s + *x));
    max.max(sum / T::of_usize(n.max(1)).sqrt())
}

#[derive(Clone, Debug)]
pub struct MaxCombo {
    n: usize,
}

impl MaxCombo {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl<T: Scalar> SymmetricNorm<T> for MaxCombo {
    fn name(&self) -> String {
        "maxcombo".into()
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        dual_topk_sqrt(mags, self.n)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        Some(T::one().max(T::of_usize(k).sqrt() / T::of_usize(self.n.max(1)).sqrt()))
    }
}

/// `x ↦ Φ(x²)^{1/2}` for an inner symmetric norm `Φ`.
pub struct QWrap<T: Scalar> {
    inner: BoxedNorm<T>,
}

impl<T: Scalar> QWrap<T> {
    pub fn new(inner: BoxedNorm<T>) -> Self {
        Self { inner }
    }
}

impl<T: Scalar> SymmetricNorm<T> for QWrap<T> {
    fn name(&self) -> String {
        format!("qwrap({})", self.inner.name())
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        for m in mags.iter_mut() {
            *m = *m * *m;
        }
        let inner_e1 = self.inner.eval_magnitudes(&mut [T::one()]);
        (self.inner.eval_magnitudes(mags) / inner_e1).sqrt()
    }

    fn closed_form_max(&self, _k: usize) -> Option<T> {
        // squared unit vectors lie in the simplex, where a norm peaks at a vertex
        Some(T::one())
    }
}
