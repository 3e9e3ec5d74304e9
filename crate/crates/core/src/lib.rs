pub mod catalog;
pub mod cli;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod heads;
pub mod inference;
pub mod losses;
pub mod math;
pub mod model;
pub mod optim;
pub mod params;
pub mod synth;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
