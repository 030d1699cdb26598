use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by the queueing formulas.
pub trait Scalar: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal; every implementor can represent (a rounding of) it.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
