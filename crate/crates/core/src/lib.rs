pub mod autodiff;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod losses;
pub mod models;
pub mod probe;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;
