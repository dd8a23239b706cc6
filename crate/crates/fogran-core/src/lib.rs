//! Simulator and optimization library for the downlink of a cache-enabled
//! fog radio access network (F-RAN).
//!
//! Enhanced remote radio heads (eRRHs) with local subfile caches serve
//! multi-antenna users over a shared spectrum, fetching uncached content
//! from a central baseband unit over capacity-limited fronthaul links.
//! The library jointly optimizes user association, per-subfile data
//! delivery rates and multi-antenna precoders by alternating a rate LP
//! with a successive convex quadratic programming step for the precoders,
//! while a reweighted l1 penalty drives unused eRRH precoder blocks to
//! zero. All convex subproblems are solved by the in-repo log-barrier
//! interior-point solver in [`convexsolver`].
//!
//! The crate is generic over the real scalar type through the [`Real`]
//! trait; `f64` is used by the command-line harness and the test suite,
//! with type aliases for the main entry points below.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

pub mod convexsolver;
pub mod driver;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod scenario;
pub mod subproblems;

/// Floating-point scalar the numerical core is generic over (f32 or f64).
pub trait Real:
    Float + FromPrimitive + Sum + fmt::Debug + fmt::Display + fmt::LowerExp + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + Sum + fmt::Debug + fmt::Display + fmt::LowerExp + Send + Sync + 'static
{
}

/// Shorthand for pulling an `f64` literal into the generic scalar type.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

pub type Complex<T> = num_complex::Complex<T>;

// Concrete aliases for the common double-precision instantiation.
pub type Scenario64 = scenario::Scenario<f64>;
pub type ScenarioConfig64 = scenario::ScenarioConfig<f64>;
pub type PrecoderStack64 = model::PrecoderStack<f64>;
pub type RunResult64 = driver::RunResult<f64>;
pub type SweepSpec64 = harness::SweepSpec<f64>;
