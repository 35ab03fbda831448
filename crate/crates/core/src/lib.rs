pub mod descent;
pub mod ensemble;
pub mod error;
pub mod landscape;
pub mod rng;
pub mod scalar;
pub mod sphere;
pub mod stats;

pub use error::{Error, Result};
pub use rng::{derive_stream, derive_subseed, Stream};
pub use scalar::Scalar;
