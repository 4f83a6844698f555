//! Quaternionic Heisenberg group analysis: the Cauchy–Szegő kernel on the
//! Siegel upper half space, self-similar tilings, and Hardy-space atoms.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod atoms;
pub mod battery;
pub mod config;
pub mod error;
pub mod group;
pub mod kernel;
pub mod poly;
pub mod quat;
pub mod report;
pub mod sampling;
pub mod tiling;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use group::{GroupDim, GroupPoint, MultiIndex, SiegelPoint, Steps};
pub use quat::{ComplexSlice, Quaternion};
