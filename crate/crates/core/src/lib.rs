pub mod analyze;
pub mod correlate;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod propagate;
pub mod scene;
pub mod source;

pub use error::{Error, Result};
