//! Numerical machinery for circle maps with a flat interval.

pub mod analysis;
pub mod conjugacy;
pub mod error;
pub mod map_core;
pub mod partition;
pub mod rotation;

pub use error::{Error, Result};
