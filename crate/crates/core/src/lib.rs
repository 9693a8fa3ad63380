pub mod betti_bounds;
pub mod error;
pub mod numfmt;
pub mod oracle;
pub mod pipeline;
pub mod quadform;
pub mod spectral_curve;
pub mod union_find;

pub use error::{Error, Result};
