pub mod dataio;
pub mod embed;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod neural;
pub mod numkit;
pub mod preprocess;
pub mod supervised;
pub mod synthetic;

pub use error::{Error, Result};
pub use numkit::{Matrix, RngStream};
