//! Cycle-by-cycle online detection.
//!
//! Each cycle draws a contingency, simulates one detection window, and runs
//! the classifier on it. Reported latency covers only the detection work
//! (feature extraction, normalization, forward pass), not the plant
//! simulation standing in for reality.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::stream_rng;
use crate::scenario::contingency::{ContingencyCatalog, ContingencySpec};
use crate::scenario::dataset::Dataset;
use crate::scenario::gen::{extract_features, sample_spec, FeatureSel};
use crate::shs::mode::ClassLabel;
use crate::shs::sim::{simulate, DetectionSchedule, InputSignal, NoiseSpec};
use crate::tsformer::checkpoint::Checkpoint;
use crate::tsformer::model::predict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub n_cycles: usize,
    pub base_seed: u64,
    pub schedule: DetectionSchedule,
    pub noise: NoiseSpec,
    pub input: InputSignal,
    pub features: Vec<FeatureSel>,
}

/// One cycle of the stream: the drawn contingency plus its window seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamCycle {
    pub spec: ContingencySpec,
    pub x0: DVector<f64>,
    pub sim_seed: u64,
}

/// A realized random switching sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStream {
    pub cycles: Vec<StreamCycle>,
}

impl ScenarioStream {
    /// Draw `n_cycles` cycles, class chosen uniformly per cycle. Cycle i is a
    /// pure function of (base_seed, i).
    pub fn random(catalog: &ContingencyCatalog, config: &DetectConfig) -> Result<Self> {
        let n = catalog.base.model.n();
        let mut cycles = Vec::with_capacity(config.n_cycles);
        for i in 0..config.n_cycles {
            let mut rng = stream_rng(config.base_seed, i as u64);
            let class = ClassLabel::from_index(rng.gen_range(0..ClassLabel::COUNT))
                .expect("class index");
            let spec = sample_spec(catalog, class, &mut rng)?;
            let x0 = if config.noise.x0_std > 0.0 {
                let dist =
                    Normal::new(0.0, config.noise.x0_std).expect("positive std");
                DVector::from_fn(n, |_, _| dist.sample(&mut rng))
            } else {
                DVector::zeros(n)
            };
            let sim_seed = rng.gen::<u64>();
            cycles.push(StreamCycle { spec, x0, sim_seed });
        }
        Ok(Self { cycles })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub cycle: usize,
    pub true_class: usize,
    pub pred_class: usize,
    pub latency_ms: f64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSequence {
    pub cycles: Vec<CycleResult>,
}

impl SwitchingSequence {
    pub fn accuracy(&self) -> f64 {
        if self.cycles.is_empty() {
            return f64::NAN;
        }
        let correct = self
            .cycles
            .iter()
            .filter(|c| c.true_class == c.pred_class)
            .count();
        correct as f64 / self.cycles.len() as f64
    }

    pub fn max_latency_ms(&self) -> f64 {
        self.cycles
            .iter()
            .map(|c| c.latency_ms)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle,true_class,pred_class,latency_ms\n");
        for c in &self.cycles {
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                c.cycle, c.true_class, c.pred_class, c.latency_ms
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::error::Error::Format(e.to_string()))
    }
}

/// Run the classifier over every cycle of a stream.
pub fn detect_stream(
    catalog: &ContingencyCatalog,
    checkpoint: &Checkpoint,
    config: &DetectConfig,
    stream: &ScenarioStream,
) -> Result<SwitchingSequence> {
    let mut results = Vec::with_capacity(stream.cycles.len());
    for (i, cycle) in stream.cycles.iter().enumerate() {
        let mode = catalog.mode_for(&cycle.spec)?;
        let traj = simulate(
            mode,
            &cycle.x0,
            &config.input,
            &config.schedule,
            &config.noise,
            cycle.sim_seed,
        )?;

        let start = Instant::now();
        let z = extract_features(&traj.states, &traj.outputs, &config.features);
        let z = Dataset::standardize(&z, &checkpoint.norm_mean, &checkpoint.norm_std)?;
        let (pred, probs) = predict(&checkpoint.params, &z)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;

        results.push(CycleResult {
            cycle: i,
            true_class: cycle.spec.class().index(),
            pred_class: pred,
            latency_ms,
            probs,
        });
    }
    Ok(SwitchingSequence { cycles: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::load_network;
    use crate::grid::params::load_params;
    use crate::grid::SystemBuilder;
    use crate::scenario::gen::default_features;
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

    fn catalog() -> ContingencyCatalog {
        let builder = SystemBuilder::new(
            load_network(NET3M).unwrap(),
            load_params(PARAMS).unwrap(),
        )
        .unwrap();
        ContingencyCatalog::build(builder).unwrap()
    }

    fn setup() -> (ContingencyCatalog, Checkpoint, DetectConfig) {
        let cat = catalog();
        let features = default_features(&cat.base.model);
        let config = DetectConfig {
            n_cycles: 6,
            base_seed: 5,
            schedule: DetectionSchedule::default(),
            noise: NoiseSpec::default(),
            input: InputSignal::Step {
                channel: 0,
                amplitude: 0.1,
            },
            features: features.clone(),
        };
        let mcfg = ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            seq_len: 30,
            n_features: features.len(),
            n_classes: 3,
            dropout: 0.0,
        };
        let params = ModelParams::init(mcfg, 0).unwrap();
        let m = features.len();
        let ckpt = Checkpoint::new(params, [0u8; 32], vec![0.0; m], vec![1.0; m]).unwrap();
        (cat, ckpt, config)
    }

    #[test]
    fn stream_is_deterministic_and_prefix_stable() {
        let (cat, _, config) = setup();
        let a = ScenarioStream::random(&cat, &config).unwrap();
        let b = ScenarioStream::random(&cat, &config).unwrap();
        assert_eq!(a, b);
        let mut short = config.clone();
        short.n_cycles = 3;
        let c = ScenarioStream::random(&cat, &short).unwrap();
        assert_eq!(&a.cycles[..3], &c.cycles[..]);
    }

    #[test]
    fn detect_reports_every_cycle() {
        let (cat, ckpt, config) = setup();
        let stream = ScenarioStream::random(&cat, &config).unwrap();
        let seq = detect_stream(&cat, &ckpt, &config, &stream).unwrap();
        assert_eq!(seq.cycles.len(), 6);
        for (i, c) in seq.cycles.iter().enumerate() {
            assert_eq!(c.cycle, i);
            assert!(c.true_class < 3 && c.pred_class < 3);
            assert!(c.latency_ms > 0.0);
            assert!((c.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let csv = seq.to_csv();
        assert!(csv.starts_with("cycle,true_class,pred_class,latency_ms\n"));
        assert_eq!(csv.lines().count(), 7);
        let json = seq.to_json().unwrap();
        let back: SwitchingSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn predictions_are_deterministic_given_stream() {
        let (cat, ckpt, config) = setup();
        let stream = ScenarioStream::random(&cat, &config).unwrap();
        let a = detect_stream(&cat, &ckpt, &config, &stream).unwrap();
        let b = detect_stream(&cat, &ckpt, &config, &stream).unwrap();
        for (x, y) in a.cycles.iter().zip(&b.cycles) {
            assert_eq!(x.pred_class, y.pred_class);
            assert_eq!(x.probs, y.probs);
        }
    }
}
