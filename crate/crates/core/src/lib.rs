pub mod cli;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
