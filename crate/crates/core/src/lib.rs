pub mod dictionary;
pub mod error;
pub mod expression;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod pruning;
pub mod regression;
pub mod report;
pub mod sequence;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
