//! Floating point scalar used by the availability analysis.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distributions::uniform::SampleUniform;

/// f32 or f64
pub trait Real: Float + FromPrimitive + ToPrimitive + SampleUniform + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an f64 literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}
