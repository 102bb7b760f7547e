#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod descriptor;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod plane;
pub mod presets;
pub mod rfields;
pub mod scalespace;

pub use error::{Error, Result};
pub use plane::Plane;
