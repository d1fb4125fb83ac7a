//! Discrete (Newtonian) capacity of finite subsets of Z^d, d ≥ 3.
//!
//! The numeric kernels (capacity solvers, intervals, dense linear algebra) are
//! generic over `f32`/`f64` through [`scalar::Scalar`]; Green values and Monte
//! Carlo estimates are `f64`. The aliases below fix the common choices.

pub mod capacity;
pub mod error;
pub mod escape;
pub mod extraction;
pub mod green;
pub mod interval;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod walks;

pub use error::{Error, Result};
pub use green::{GreenConfig, GreenTable};
pub use interval::ProbBracket;
pub use lattice::{Point, SiteSet};
pub use rng::StepRng;

pub type Interval64 = interval::Interval<f64>;
pub type Interval32 = interval::Interval<f32>;
pub type Capacity = capacity::CapacityResult<f64>;
pub type Capacity32 = capacity::CapacityResult<f32>;
pub type Matrix = linalg::DenseMatrix<f64>;
