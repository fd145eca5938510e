//! Online detection over a stream of contingency cycles, plus the
//! model-based residual baseline comparison.

pub mod baseline;
pub mod stream;

pub use baseline::{compare_baseline, BaselineComparison};
pub use stream::{detect_stream, CycleResult, DetectConfig, ScenarioStream, SwitchingSequence};
