pub mod dataio;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod stip;
pub mod tensor;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use error::{Error, FormatError, Result};
