//! Assemblage moment matrices: device-independent bounds on steering
//! robustness, steerable weight and measurement incompatibility, plus the
//! trusted-side programs they are compared against.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod conic;
pub mod error;
pub mod incompat;
pub mod matlin;
pub mod moments;
pub mod programs;
pub mod quantum;
pub mod scenario;

pub use error::{Error, Result};

/// Version tag written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;
