//! Grid contingency modeling and detection toolkit.
//!
//! Models a distribution grid with synchronous generators and a GFL-controlled
//! PV-BESS as a randomly switched linear system, generates labeled contingency
//! time-series windows, and trains a transformer encoder classifier alongside
//! a model-based residual baseline.

pub(crate) mod bytes;
pub mod detector;
pub mod error;
pub mod grid;
pub mod matio;
pub mod rng;
pub mod scenario;
pub mod shs;
pub mod ss;
pub mod tsformer;

pub use error::{Error, Result};
pub use ss::StateSpaceModel;
