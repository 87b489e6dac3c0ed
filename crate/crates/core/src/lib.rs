mod binio;
pub mod bitstream;
pub mod checkpoint;
pub mod codec;
pub mod corpus;
pub mod descriptor;
pub mod entropy;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod nn;
pub mod standardize;
pub mod synth;

pub use error::{Error, Result};
