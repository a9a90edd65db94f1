pub mod data;
pub mod error;
pub mod eval;
pub mod fed;
pub mod gbdt;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod partition;

pub use error::{Error, Result};
