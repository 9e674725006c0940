pub mod calibrate;
pub mod conic;
pub mod dataset;
pub mod ensemble;
pub mod experiment;
pub mod grid;
pub mod error;
pub mod logistic;
pub mod matrix;
pub mod scp;
pub mod seed;
pub mod sim;
pub mod theory;
pub mod tree;

pub use error::{Error, Result};
