pub mod classifier;
pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
mod io_util;
pub mod manifest;
pub mod nss;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
