pub mod cli;
pub mod error;
pub mod estimators;
pub mod guide;
pub mod inference;
pub mod math;
pub mod model;
pub mod simgen;
pub mod stochastic;

pub use error::{Error, Result, Stage};
