//! Behavioral simulation and training of analog Kolmogorov-Arnold
//! networks assembled from analog building blocks (inversion,
//! subtraction, addition, multiplication, squaring).
//!
//! * [`abb`]: block models with calibrated error injection and rail clipping
//! * [`spline`]: quadratic Bézier forms, range constraints, the five-block
//!   analog spline
//! * [`kan`]: single-input KAN layer, MAC composition, noise-aware training
//! * [`digital`]: bit-exact 8-bit fixed-point reference spline
//! * [`metrics`]: NMPE and friends
//! * [`cost`]: weighted block-count cost of both spline forms
//! * [`experiment`]: the runners behind the `abbkan` command line

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abb;
pub mod cost;
pub mod digital;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod kan;
pub mod metrics;
pub mod rng;
pub mod spline;

pub use error::{Error, Result};
pub use exec::Execution;

/// Crate version, echoed into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
