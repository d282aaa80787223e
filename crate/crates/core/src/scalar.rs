//! Scalar abstraction for probability and latent-space arithmetic.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable for probabilities and codebook coordinates: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Every value we feed through here is finite.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// Tolerance used when validating that weights sum to one.
    fn normalization_tolerance(len: usize) -> Self {
        let scaled = Self::epsilon() * Self::of(4.0 * len.max(1) as f64);
        Self::of(1e-6).max(scaled)
    }
}

impl Real for f32 {}
impl Real for f64 {}
