//! Scalar abstraction for the formula layer.
//!
//! All utility and payoff arithmetic is written against [`Real`] so the same
//! formulas run at `f32` or `f64`. Simulation state sticks to the crate-level
//! [`crate::Scalar`] alias.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable in the utility formulas: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + std::fmt::Debug + std::fmt::Display {
    /// Lossy conversion from a count. Counts in this simulator stay far below
    /// 2^24, so even `f32` represents them exactly.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
