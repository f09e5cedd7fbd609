//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All solvers are written against [`Real`], which is satisfied by `f32` and
//! `f64`. The acceptance tolerances used throughout the test-suite assume
//! `f64`; `f32` instantiations are supported for experimentation.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating point scalar usable by the solvers.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn machine_eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}
