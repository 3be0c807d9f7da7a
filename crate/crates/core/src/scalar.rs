//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the metrics, ranker and loss functions are generic over.
///
/// Implemented for `f32` and `f64`. The pipeline and all on-disk artifacts use `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless for counts below 2^24 (`f32`) or 2^53 (`f64`).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as float")
    }

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable as float")
    }

    /// Relative gap below which two accumulated utilities count as equal.
    fn tie_tolerance() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }

    /// `self > other` beyond rounding noise.
    fn clearly_greater(self, other: Self) -> bool {
        self - other > Self::tie_tolerance() * Self::one().max(self.abs()).max(other.abs())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
