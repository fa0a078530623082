//! Distance to a measure (DTM), its empirical estimate, and non-asymptotic
//! bounds on the estimation error.

pub mod bounds;
pub mod config;
pub mod dtm;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kdtree;
pub mod process;
pub mod regularity;
pub mod seed;

pub use error::{Error, Result};
