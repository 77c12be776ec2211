//! Scalar abstraction for the numeric code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar every solver in this crate is generic over.
///
/// `f32` and `f64` satisfy it out of the box; `f64` is what the CLI uses.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

/// Lifts an `f64` constant into the generic scalar type.
pub(crate) fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant must be representable in the scalar type")
}

/// `usize` to scalar, exact for any realistic grid size.
pub(crate) fn cu<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count must be representable in the scalar type")
}
