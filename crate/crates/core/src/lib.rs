pub mod error;
pub mod hilbert;

pub use error::{Error, Result};
pub mod emitters;
pub mod optics;
pub mod protocols;
pub mod runner;
