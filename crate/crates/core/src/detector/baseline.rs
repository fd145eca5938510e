//! Residual-matching baseline run side by side with the classifier.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::detector::stream::{DetectConfig, ScenarioStream};
use crate::scenario::contingency::ContingencyCatalog;
use crate::scenario::dataset::Dataset;
use crate::scenario::gen::extract_features;
use crate::shs::response::{expected_responses, residual_classify};
use crate::shs::sim::simulate;
use crate::tsformer::checkpoint::Checkpoint;
use crate::tsformer::model::predict;
use crate::tsformer::train::ConfusionMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub transformer: ConfusionMatrix,
    pub baseline: ConfusionMatrix,
    /// Fraction of cycles where both detectors emit the same class.
    pub agreement: f64,
    pub n_cycles: usize,
}

/// Run both detectors over the same realized windows.
///
/// The baseline matches each window's sensed outputs against per-mode
/// expected responses computed from a zero initial condition, then maps the
/// winning mode to its class. The transformer sees the same windows through
/// the feature pipeline.
pub fn compare_baseline(
    catalog: &ContingencyCatalog,
    checkpoint: &Checkpoint,
    config: &DetectConfig,
    stream: &ScenarioStream,
) -> Result<BaselineComparison> {
    let library = catalog.library()?;
    let x0 = DVector::zeros(catalog.base.model.n());
    let responses = expected_responses(&library, &config.input, &x0, &config.schedule)?;

    let n_classes = checkpoint.params.config.n_classes;
    let mut tf_cm = ConfusionMatrix::new(n_classes);
    let mut bl_cm = ConfusionMatrix::new(n_classes);
    let mut agree = 0usize;
    for cycle in &stream.cycles {
        let mode = catalog.mode_for(&cycle.spec)?;
        let traj = simulate(
            mode,
            &cycle.x0,
            &config.input,
            &config.schedule,
            &config.noise,
            cycle.sim_seed,
        )?;
        let truth = cycle.spec.class().index();

        let z = extract_features(&traj.states, &traj.outputs, &config.features);
        let z = Dataset::standardize(&z, &checkpoint.norm_mean, &checkpoint.norm_std)?;
        let (tf_pred, _) = predict(&checkpoint.params, &z)?;
        tf_cm.record(truth, tf_pred);

        let mode_id = residual_classify(&traj.outputs, &responses)?;
        let bl_pred = library
            .get(mode_id)
            .expect("classified mode is in library")
            .class_label
            .index();
        bl_cm.record(truth, bl_pred);

        if tf_pred == bl_pred {
            agree += 1;
        }
    }
    let n = stream.cycles.len();
    Ok(BaselineComparison {
        transformer: tf_cm,
        baseline: bl_cm,
        agreement: agree as f64 / n.max(1) as f64,
        n_cycles: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::load_network;
    use crate::grid::params::load_params;
    use crate::grid::SystemBuilder;
    use crate::scenario::gen::default_features;
    use crate::shs::sim::{DetectionSchedule, InputSignal, NoiseSpec};
    use crate::tsformer::config::ModelConfig;
    use crate::tsformer::params::ModelParams;

    const NET3M: &str = "\
[system]
slack = 1
s_base_mva = 1.0
v_base_kv = 1.0
ext_grid_b = 50.0

[buses]
1 1 0.0 0.0
2 0 0.5 0.2
3 1 0.0 0.0

[lines]
1 1 2 0.0 0.1 1
2 2 3 0.0 0.1 1
3 1 3 0.0 0.2 1

[generators]
g1 1
g3 3

[sensors]
delta_g1
delta_g3
";

    const PARAMS: &str = r#"
[swing.g1]
m = 0.05
d = 2.0

[swing.g3]
m = 0.04
d = 1.5

[operating_point]
v_mag = 1.0
p_set = 0.5
"#;

    #[test]
    fn baseline_is_perfect_without_noise() {
        let builder = SystemBuilder::new(
            load_network(NET3M).unwrap(),
            load_params(PARAMS).unwrap(),
        )
        .unwrap();
        let cat = ContingencyCatalog::build(builder).unwrap();
        let features = default_features(&cat.base.model);
        let m = features.len();
        let config = DetectConfig {
            n_cycles: 12,
            base_seed: 2,
            schedule: DetectionSchedule::default(),
            noise: NoiseSpec::OFF,
            input: InputSignal::Step {
                channel: 0,
                amplitude: 0.2,
            },
            features,
        };
        let mcfg = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            seq_len: 30,
            n_features: m,
            n_classes: 3,
            dropout: 0.0,
        };
        let ckpt = Checkpoint::new(
            ModelParams::init(mcfg, 0).unwrap(),
            [0u8; 32],
            vec![0.0; m],
            vec![1.0; m],
        )
        .unwrap();
        let stream = ScenarioStream::random(&cat, &config).unwrap();
        let cmp = compare_baseline(&cat, &ckpt, &config, &stream).unwrap();
        assert_eq!(cmp.n_cycles, 12);
        // With zero noise and zero x0, each window equals its mode's expected
        // response exactly, so the residual baseline is perfect.
        assert_eq!(cmp.baseline.accuracy(), 1.0);
        assert_eq!(cmp.transformer.total(), 12);
        assert!((0.0..=1.0).contains(&cmp.agreement));
    }
}
