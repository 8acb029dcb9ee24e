pub mod envelope;
pub mod error;
pub mod flat_metric;
pub mod generation;
pub mod grid;
pub mod integrands;
pub mod linalg;
pub mod lp;
pub mod sphere;
pub mod symbols;
pub mod young_measures;

pub use error::{Error, Result};
