//! Scenario sampling and labeled dataset generation.

use nalgebra::DVector;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::gfl::GFL_STATE_NAMES;
use crate::rng::stream_rng;
use crate::scenario::contingency::{ContingencyCatalog, ContingencySpec};
use crate::scenario::dataset::{Dataset, Window};
use crate::shs::mode::{ClassLabel, Mode};
use crate::shs::momi::RationalInput;
use crate::shs::sim::{simulate, DetectionSchedule, InputSignal, NoiseSpec};
use crate::ss::StateSpaceModel;

/// One dataset feature: a sensed output channel or a direct state channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureSel {
    Output(usize),
    State(usize),
}

/// Default feature list for an integrated grid model, in order: sensed
/// outputs, then unsensed rotor angles, rotor speeds, and converter states
/// up to the battery internal branch. Sensed states appear only through
/// their output channel, never as a clean duplicate.
pub fn default_features(model: &StateSpaceModel) -> Vec<FeatureSel> {
    let mut features: Vec<FeatureSel> = (0..model.p()).map(FeatureSel::Output).collect();
    let sensed: std::collections::BTreeSet<&str> =
        model.output_names.iter().map(String::as_str).collect();
    for (i, name) in model.state_names.iter().enumerate() {
        if name.starts_with("delta_") && !sensed.contains(name.as_str()) {
            features.push(FeatureSel::State(i));
        }
    }
    for (i, name) in model.state_names.iter().enumerate() {
        if name.starts_with("omega_") && name != "omega_pll" && !sensed.contains(name.as_str()) {
            features.push(FeatureSel::State(i));
        }
    }
    for gfl_name in GFL_STATE_NAMES.iter().take(16) {
        if sensed.contains(gfl_name) {
            continue;
        }
        if let Some(i) = model.state_names.iter().position(|n| n == gfl_name) {
            features.push(FeatureSel::State(i));
        }
    }
    features
}

/// Excitation applied on the active-power reference channel during every
/// detection window: amplitude / (s + 5), a decaying pulse.
pub fn default_input(model: &StateSpaceModel, amplitude: f64) -> Result<InputSignal> {
    let channel = model
        .input_index("p_ref")
        .ok_or_else(|| Error::Validation("model has no p_ref input channel".into()))?;
    Ok(InputSignal::Rational(RationalInput::new(
        vec![amplitude],
        vec![1.0, 5.0],
        channel,
    )?))
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Windows per class: [normal, physical, measurement].
    pub counts: [usize; 3],
    pub schedule: DetectionSchedule,
    pub noise: NoiseSpec,
    pub input: InputSignal,
    pub features: Vec<FeatureSel>,
    pub base_seed: u64,
}

impl GenConfig {
    pub fn validate(&self, model: &StateSpaceModel) -> Result<()> {
        self.schedule.validate()?;
        if self.features.is_empty() {
            return Err(Error::Validation("feature list is empty".into()));
        }
        for f in &self.features {
            match f {
                FeatureSel::Output(i) if *i >= model.p() => {
                    return Err(Error::Dimension(format!(
                        "feature output {i} out of range for {} outputs",
                        model.p()
                    )));
                }
                FeatureSel::State(i) if *i >= model.n() => {
                    return Err(Error::Dimension(format!(
                        "feature state {i} out of range for {} states",
                        model.n()
                    )));
                }
                _ => {}
            }
        }
        if self.counts.iter().sum::<usize>() == 0 {
            return Err(Error::Validation("no windows requested".into()));
        }
        Ok(())
    }
}

/// Extract the feature matrix (S x M) from a simulated trajectory.
pub fn extract_features(
    states: &nalgebra::DMatrix<f64>,
    outputs: &nalgebra::DMatrix<f64>,
    features: &[FeatureSel],
) -> Array2<f64> {
    let s = states.nrows();
    Array2::from_shape_fn((s, features.len()), |(k, j)| match features[j] {
        FeatureSel::Output(i) => outputs[(k, i)],
        FeatureSel::State(i) => states[(k, i)],
    })
}

/// Per-scenario record kept alongside the dataset for traceability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub index: usize,
    pub spec: ContingencySpec,
    pub mode_id: u32,
    pub sim_seed: u64,
}

/// Draw a contingency of the given class with the scenario's own stream.
pub fn sample_spec(
    catalog: &ContingencyCatalog,
    class: ClassLabel,
    rng: &mut impl Rng,
) -> Result<ContingencySpec> {
    match class {
        ClassLabel::Normal => Ok(ContingencySpec::Normal),
        ClassLabel::Physical => {
            if catalog.admissible_lines.is_empty() {
                return Err(Error::Validation(
                    "no admissible line outages: every outage islands a dynamic bus".into(),
                ));
            }
            let k = rng.gen_range(0..catalog.admissible_lines.len());
            Ok(ContingencySpec::Physical {
                line_id: catalog.admissible_lines[k],
            })
        }
        ClassLabel::Measurement => {
            let p = catalog.base.model.p();
            if p == 0 {
                return Err(Error::Validation("model has no sensors to corrupt".into()));
            }
            let sensor_index = rng.gen_range(0..p);
            let scale = catalog.scales[rng.gen_range(0..catalog.scales.len())];
            Ok(ContingencySpec::Measurement {
                sensor_index,
                scale,
            })
        }
    }
}

/// Generate the full labeled dataset.
///
/// Scenario i draws everything from `stream_rng(base_seed, i)`: first the
/// contingency parameters, then the initial condition, then the simulation
/// seed. Generation order never affects any individual scenario.
pub fn generate_dataset(
    catalog: &ContingencyCatalog,
    config: &GenConfig,
) -> Result<(Dataset, Vec<ScenarioRecord>)> {
    config.validate(&catalog.base.model)?;
    let n = catalog.base.model.n();
    let s = config.schedule.samples();
    let m = config.features.len();

    let mut windows = Vec::new();
    let mut records = Vec::new();
    let mut index = 0usize;
    for (class_idx, &count) in config.counts.iter().enumerate() {
        let class = ClassLabel::from_index(class_idx).expect("three classes");
        for _ in 0..count {
            let mut rng = stream_rng(config.base_seed, index as u64);
            let spec = sample_spec(catalog, class, &mut rng)?;
            let mode: &Mode = catalog.mode_for(&spec)?;

            let x0 = draw_x0(n, config.noise.x0_std, &mut rng);
            let sim_seed = rng.gen::<u64>();
            let traj = simulate(
                mode,
                &x0,
                &config.input,
                &config.schedule,
                &config.noise,
                sim_seed,
            )?;
            windows.push(Window {
                z: extract_features(&traj.states, &traj.outputs, &config.features),
                label: class.index() as u8,
            });
            records.push(ScenarioRecord {
                index,
                spec,
                mode_id: mode.id,
                sim_seed,
            });
            index += 1;
        }
    }
    let dataset = Dataset::new(windows, s, m, ClassLabel::COUNT)?;
    Ok((dataset, records))
}

fn draw_x0(n: usize, std: f64, rng: &mut impl Rng) -> DVector<f64> {
    if std <= 0.0 {
        return DVector::zeros(n);
    }
    let dist = Normal::new(0.0, std).expect("positive std");
    DVector::from_fn(n, |_, _| dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::load_network;
    use crate::grid::params::load_params;
    use crate::grid::SystemBuilder;

    // Triangle network: every single outage keeps the mesh connected.
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

    fn catalog() -> ContingencyCatalog {
        let builder = SystemBuilder::new(
            load_network(NET3M).unwrap(),
            load_params(PARAMS).unwrap(),
        )
        .unwrap();
        ContingencyCatalog::build(builder).unwrap()
    }

    fn config(catalog: &ContingencyCatalog) -> GenConfig {
        GenConfig {
            counts: [4, 4, 4],
            schedule: DetectionSchedule::default(),
            noise: NoiseSpec::default(),
            input: InputSignal::Step {
                channel: 0,
                amplitude: 0.1,
            },
            features: default_features(&catalog.base.model),
            base_seed: 11,
        }
    }

    #[test]
    fn default_features_cover_outputs_angles_speeds() {
        let cat = catalog();
        let feats = default_features(&cat.base.model);
        // 2 sensed outputs + 0 unsensed angles + 2 speeds, no GFL unit here.
        assert_eq!(feats.len(), 4);
        assert_eq!(feats[0], FeatureSel::Output(0));
        assert_eq!(feats[1], FeatureSel::Output(1));
        let omega_g1 = cat.base.model.state_index("omega_g1").unwrap();
        assert!(feats.contains(&FeatureSel::State(omega_g1)));
    }

    #[test]
    fn class_counts_and_labels_follow_plan() {
        let cat = catalog();
        let (ds, records) = generate_dataset(&cat, &config(&cat)).unwrap();
        assert_eq!(ds.windows.len(), 12);
        assert_eq!(ds.class_counts(), vec![4, 4, 4]);
        assert_eq!(ds.s, 30);
        for r in &records[0..4] {
            assert_eq!(r.spec, ContingencySpec::Normal);
            assert_eq!(r.mode_id, 0);
        }
        for r in &records[4..8] {
            assert!(matches!(r.spec, ContingencySpec::Physical { .. }));
        }
        for r in &records[8..12] {
            assert!(matches!(r.spec, ContingencySpec::Measurement { .. }));
        }
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let cat = catalog();
        let cfg = config(&cat);
        let (a, ra) = generate_dataset(&cat, &cfg).unwrap();
        let (b, rb) = generate_dataset(&cat, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let mut cfg2 = cfg.clone();
        cfg2.base_seed = 12;
        let (c, _) = generate_dataset(&cat, &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scenario_draws_are_independent_of_counts() {
        // Scenario i only consumes stream i, so shrinking the normal block
        // must not change the first normal windows.
        let cat = catalog();
        let cfg = config(&cat);
        let mut small = cfg.clone();
        small.counts = [2, 0, 0];
        let (full, _) = generate_dataset(&cat, &cfg).unwrap();
        let (sub, _) = generate_dataset(&cat, &small).unwrap();
        assert_eq!(full.windows[0], sub.windows[0]);
        assert_eq!(full.windows[1], sub.windows[1]);
    }

    #[test]
    fn momi_default_input_realizes() {
        let cat = catalog();
        // No p_ref channel on a pure-swing system.
        assert!(default_input(&cat.base.model, 1.0).is_err());
    }

    #[test]
    fn feature_extraction_matches_trajectory() {
        let cat = catalog();
        let cfg = config(&cat);
        let mut rng = stream_rng(cfg.base_seed, 0);
        let _spec = sample_spec(&cat, ClassLabel::Normal, &mut rng).unwrap();
        let x0 = draw_x0(cat.base.model.n(), cfg.noise.x0_std, &mut rng);
        let sim_seed = rng.gen::<u64>();
        let traj = simulate(
            &cat.base,
            &x0,
            &cfg.input,
            &cfg.schedule,
            &cfg.noise,
            sim_seed,
        )
        .unwrap();
        let (ds, _) = generate_dataset(&cat, &cfg).unwrap();
        let z = extract_features(&traj.states, &traj.outputs, &cfg.features);
        assert_eq!(ds.windows[0].z, z);
    }

    #[test]
    fn invalid_feature_index_rejected() {
        let cat = catalog();
        let mut cfg = config(&cat);
        cfg.features.push(FeatureSel::State(999));
        assert!(generate_dataset(&cat, &cfg).is_err());
    }
}
