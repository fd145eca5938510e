//! From-scratch transformer encoder classifier for detection windows.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use model::{backward, cross_entropy, forward, predict, ForwardCache};
pub use params::{ModelParams, TensorLayout, TensorStore};
pub use train::{evaluate, stack_windows, train, Adam, ConfusionMatrix, EpochStats};
