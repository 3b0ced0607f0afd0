//! Feature-imitating recurrent networks for surface-EMG hand-movement recognition.
//!
//! The numeric core ([`nn`]) is generic over [`Real`]; the data pipeline runs in `f64`
//! through the aliases below.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod features;
pub mod fin;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor = nn::Tensor<f64>;
pub type Fin = fin::FinModel<f64>;
pub type FinSet = fin::FinSet<f64>;
pub type Cnn = classifier::CnnModel<f64>;
