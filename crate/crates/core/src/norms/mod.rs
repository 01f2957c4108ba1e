//! Symmetric norms evaluated through coordinate queries.
//!
//! Every norm here is normalized so that `l(e_i) = 1`. A norm built for ambient
//! dimension `n` accepts shorter vectors, which are read as zero-padded; this is
//! how the restriction `l^{(k)}` to the first `k` coordinates is evaluated.

mod boxtheta;
mod ksupport;
mod simple;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::FrequencyVector;
use crate::{BoxedNorm, Scalar};

pub use boxtheta::{eval_boxtheta_dual, BoxThetaDual};
pub use ksupport::{eval_ksupport, KSupport};
pub use simple::{
    eval_lp, eval_maxcombo, eval_topk, eval_topk_dual, Exponent, Lp, MaxCombo, QWrap, TopK,
    TopKDual,
};

/// Read access to a vector, one coordinate at a time.
pub trait VectorView<T: Scalar> {
    fn len(&self) -> usize;

    fn get(&self, i: usize) -> T;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn magnitudes(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.get(i).abs()).collect()
    }
}

impl<T: Scalar> VectorView<T> for [T] {
    fn len(&self) -> usize {
        <[T]>::len(self)
    }

    fn get(&self, i: usize) -> T {
        self[i]
    }

    fn magnitudes(&self) -> Vec<T> {
        self.iter().map(|x| x.abs()).collect()
    }
}

impl<T: Scalar> VectorView<T> for Vec<T> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, i: usize) -> T {
        self[i]
    }

    fn magnitudes(&self) -> Vec<T> {
        self.as_slice().magnitudes()
    }
}

impl<T: Scalar> VectorView<T> for FrequencyVector {
    fn len(&self) -> usize {
        self.n()
    }

    fn get(&self, i: usize) -> T {
        T::from_i64(self.values()[i]).unwrap_or_else(T::nan)
    }
}

pub trait SymmetricNorm<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    /// Ambient dimension `n` the norm was built for.
    fn dim(&self) -> usize;

    /// Evaluates on nonnegative magnitudes; the slice may be reordered.
    fn eval_magnitudes(&self, mags: &mut [T]) -> T;

    fn eval(&self, x: &dyn VectorView<T>) -> T {
        let mut mags = x.magnitudes();
        self.eval_magnitudes(&mut mags)
    }

    /// Maximum of the restriction `l^{(k)}` on the unit sphere, when known exactly.
    fn closed_form_max(&self, _k: usize) -> Option<T> {
        None
    }
}

impl<T: Scalar> SymmetricNorm<T> for BoxedNorm<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_magnitudes(&self, mags: &mut [T]) -> T {
        (**self).eval_magnitudes(mags)
    }

    fn eval(&self, x: &dyn VectorView<T>) -> T {
        (**self).eval(x)
    }

    fn closed_form_max(&self, k: usize) -> Option<T> {
        (**self).closed_form_max(k)
    }
}

pub(crate) fn sort_desc<T: Scalar>(mags: &mut [T]) {
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must lie in [1, {n}], got {k}")));
    }
    Ok(())
}

/// Norm selection record, e.g. `{"kind": "topk", "k": 32}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormSpec {
    Lp {
        p: Exponent,
    },
    Topk {
        k: usize,
    },
    TopkDual {
        k: usize,
    },
    Ksupport {
        k: usize,
    },
    BoxthetaDual {
        a: f64,
        b: f64,
        c: f64,
    },
    Qwrap {
        inner: Box<NormSpec>,
    },
    Maxcombo,
}

impl NormSpec {
    pub fn lp(p: f64) -> Self {
        NormSpec::Lp {
            p: Exponent::from(p),
        }
    }

    /// Accepts `{"norm": {...}}` or a bare record.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let inner = match value.get("norm") {
            Some(v) => v.clone(),
            None => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn build<T: Scalar>(&self, n: usize) -> Result<BoxedNorm<T>> {
        Ok(match self {
            NormSpec::Lp { p } => Box::new(Lp::with_exponent(*p, n)?),
            NormSpec::Topk { k } => Box::new(TopK::new(*k, n)?),
            NormSpec::TopkDual { k } => Box::new(TopKDual::new(*k, n)?),
            NormSpec::Ksupport { k } => Box::new(KSupport::new(*k, n)?),
            NormSpec::BoxthetaDual { a, b, c } => {
                Box::new(BoxThetaDual::new(T::of(*a), T::of(*b), T::of(*c), n)?)
            }
            NormSpec::Qwrap { inner } => Box::new(QWrap::new(inner.build::<T>(n)?)),
            NormSpec::Maxcombo => Box::new(MaxCombo::new(n)),
        })
    }
}
