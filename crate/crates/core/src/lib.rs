//! Non-Cartesian MRI reconstruction toolkit.

pub mod classical;
pub mod container;
pub mod error;
pub mod metrics;
pub mod nufft;
pub mod seed;
pub mod sim;
pub mod tensor;
pub mod traj;
pub mod wavelet;

pub use error::{Error, Result};
