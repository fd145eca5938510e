//! Network ingestion and construction of the integrated linear grid model.

pub mod assemble;
pub mod builder;
pub mod gfl;
pub mod kron;
pub mod network;
pub mod params;
pub mod swing;

pub use assemble::{assemble_system, PlacedBlock};
pub use builder::SystemBuilder;
pub use gfl::{build_gfl_block, default_gfl_params, default_operating_point, GFL_STATE_NAMES};
pub use kron::{kron_reduce, CouplingMatrix};
pub use network::{load_network, load_network_file, Bus, BusNetwork, Line};
pub use params::{load_params, load_params_file, GflParams, OperatingPoint, ParamSet, SwingParams};
pub use swing::build_swing_block;
