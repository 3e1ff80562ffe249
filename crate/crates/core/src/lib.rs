pub mod algebra;
pub mod bounds;
pub mod channels;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod gap;
pub mod linalg;
pub mod sigma;
pub mod structure;

pub use error::{Error, Result};
