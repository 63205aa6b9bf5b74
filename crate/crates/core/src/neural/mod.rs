//! Small trainable-layer toolkit: dense layers, one-hidden-layer feed-forward
//! scorers, dropout, Xavier initialization, sigmoid/BCE, Adam, and a
//! finite-difference gradient checker.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for gradient checks.

mod adam;
pub mod gradcheck;
mod layers;
mod loss;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

pub use adam::{AdamConfig, AdamState};
pub use layers::{xavier_bound, xavier_init, Dense, Ffnn, FfnnCache, Mode};
pub use loss::{bce_loss, log_sigmoid, sigmoid, LossKind};
pub use params::Parameters;

/// Deterministic generator used for initialization, dropout and sampling.
pub type Rng = rand_chacha::ChaCha8Rng;

pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
