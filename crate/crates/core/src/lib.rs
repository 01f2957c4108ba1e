//! Turnstile-stream estimation of symmetric norms.
//!
//! A stream of signed updates to an `n`-dimensional integer vector is summarized
//! by a grid of subsampled CountSketch tables. From the grid we recover an
//! approximate level vector: for a geometric base `α`, how many coordinates have
//! magnitude in each band `[α^{i-1}, α^i)`. Any symmetric norm is then evaluated
//! on the level vector through coordinate queries.
//!
//! ```
//! use symnorm::{generate_stream, Lp, StreamSpec, SymmetricNorm, FrequencyVector};
//!
//! let spec = StreamSpec::random_turnstile(64, 500, 5, 11);
//! let updates = generate_stream(&spec).unwrap();
//! let mut v = FrequencyVector::new(64);
//! v.apply_all(&updates).unwrap();
//! let l2 = Lp::<f64>::new(2.0, 64).unwrap();
//! assert!(l2.eval(&v) > 0.0);
//! ```

pub mod concentration;
pub mod countsketch;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod level;
pub mod levels;
pub mod norms;
pub mod seed;
pub mod stream;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the norm toolkit is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite conversion")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("finite conversion")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

pub use concentration::{compute_mmc, estimate_max, estimate_median, ConcentrationProfile};
pub use countsketch::{CountSketchTable, HeavyHitterMap};
pub use error::{Error, Result};
pub use estimator::{
    h_xi, one_pass_symmetric_norm, tradeoff_estimate, EstimatorConfig, MmcInput, TradeoffConfig,
};
pub use level::{exact_level_vector, level_count, LevelVector, LevelView};
pub use levels::{LabScale, LabTargets, LevelConstants, LevelEstimate, SampleLevelSketch};
pub use norms::{
    BoxThetaDual, KSupport, Lp, MaxCombo, NormSpec, QWrap, SymmetricNorm, TopK, TopKDual,
    VectorView,
};
pub use stream::{generate_stream, FrequencyVector, StreamKind, StreamSpec, StreamUpdate};

pub type BoxedNorm<T> = Box<dyn SymmetricNorm<T>>;

pub type Lp64 = Lp<f64>;
pub type Lp32 = Lp<f32>;
pub type LevelVector64 = LevelVector<f64>;
pub type LevelVector32 = LevelVector<f32>;
pub type Profile64 = ConcentrationProfile<f64>;
pub type Profile32 = ConcentrationProfile<f32>;
pub type Norm64 = BoxedNorm<f64>;
pub type Norm32 = BoxedNorm<f32>;
