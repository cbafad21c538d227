pub mod config;
pub mod error;
pub mod eval;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod sim;
pub mod trainer;
pub mod workload;

pub use error::{Error, Result};
