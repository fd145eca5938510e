//! Randomly switched linear system core: mode library, ZOH sampling,
//! windowed simulation, observability, input design, and the residual
//! baseline.

pub mod mode;
pub mod momi;
pub mod obsv;
pub mod response;
pub mod sim;
pub mod zoh;

pub use mode::{load_library, save_library, ClassLabel, Mode, ModeLibrary};
pub use momi::{momi_check, poly_roots, MomiVerdict, RationalInput};
pub use obsv::observability;
pub use response::{expected_responses, residual_classify, ResponseLibrary};
pub use sim::{simulate, DetectionSchedule, InputSignal, NoiseSpec, Trajectory};
pub use zoh::{discretize_zoh, DiscreteModel};
