//! Contingency scenario catalog, dataset generation, and dataset files.

pub mod contingency;
pub mod dataset;
pub mod gen;

pub use contingency::{
    apply_measurement, apply_physical, measurement_scales, ContingencyCatalog, ContingencySpec,
};
pub use dataset::{Dataset, Window};
pub use gen::{
    default_features, default_input, extract_features, generate_dataset, sample_spec, FeatureSel,
    GenConfig, ScenarioRecord,
};
