//! Resolved run configuration: built-in defaults, overlaid by an optional
//! TOML file, overlaid by command-line flags.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use shsd_core::{Error, Result};

fn d_network() -> PathBuf {
    "data/ieee33-mesh.net".into()
}
fn d_params() -> PathBuf {
    "data/params.toml".into()
}
fn d_dataset() -> PathBuf {
    "out/dataset.shsd".into()
}
fn d_checkpoint() -> PathBuf {
    "out/model.shsm".into()
}
fn d_out_dir() -> PathBuf {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default = "d_network")]
    pub network: PathBuf,
    #[serde(default = "d_params")]
    pub params: PathBuf,
    #[serde(default = "d_dataset")]
    pub dataset: PathBuf,
    #[serde(default = "d_checkpoint")]
    pub checkpoint: PathBuf,
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            network: d_network(),
            params: d_params(),
            dataset: d_dataset(),
            checkpoint: d_checkpoint(),
            out_dir: d_out_dir(),
        }
    }
}

fn d_counts() -> [usize; 3] {
    [200, 200, 200]
}
fn d_gen_seed() -> u64 {
    42
}
fn d_amplitude() -> f64 {
    20.0
}
fn d_process_std() -> f64 {
    1e-9
}
fn d_meas_std() -> f64 {
    1e-5
}
fn d_x0_std() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    #[serde(default = "d_counts")]
    pub counts: [usize; 3],
    #[serde(default = "d_gen_seed")]
    pub base_seed: u64,
    /// Excitation amplitude of the rational input on the p_ref channel.
    #[serde(default = "d_amplitude")]
    pub amplitude: f64,
    #[serde(default = "d_process_std")]
    pub process_std: f64,
    #[serde(default = "d_meas_std")]
    pub meas_std: f64,
    #[serde(default = "d_x0_std")]
    pub x0_std: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            counts: d_counts(),
            base_seed: d_gen_seed(),
            amplitude: d_amplitude(),
            process_std: d_process_std(),
            meas_std: d_meas_std(),
            x0_std: d_x0_std(),
        }
    }
}

fn d_tau() -> f64 {
    0.3
}
fn d_tau0() -> f64 {
    0.03
}
fn d_dt() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_tau0")]
    pub tau0: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            tau: d_tau(),
            tau0: d_tau0(),
            dt: d_dt(),
        }
    }
}

fn d_train_frac() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "d_train_frac")]
    pub train_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_frac: d_train_frac(),
            seed: 0,
        }
    }
}

fn d_layers() -> usize {
    6
}
fn d_heads() -> usize {
    8
}
fn d_d_model() -> usize {
    64
}
fn d_d_ff() -> usize {
    256
}
fn d_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_layers")]
    pub layers: usize,
    #[serde(default = "d_heads")]
    pub heads: usize,
    #[serde(default = "d_d_model")]
    pub d_model: usize,
    #[serde(default = "d_d_ff")]
    pub d_ff: usize,
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            layers: d_layers(),
            heads: d_heads(),
            d_model: d_d_model(),
            d_ff: d_d_ff(),
            dropout: d_dropout(),
            init_seed: 0,
        }
    }
}

fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: d_epochs(),
            batch_size: d_batch(),
            learning_rate: d_lr(),
            seed: 0,
        }
    }
}

fn d_cycles() -> usize {
    200
}
fn d_detect_seed() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    #[serde(default = "d_cycles")]
    pub n_cycles: usize,
    #[serde(default = "d_detect_seed")]
    pub base_seed: u64,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            n_cycles: d_cycles(),
            base_seed: d_detect_seed(),
        }
    }
}

/// Everything a run depends on. Serialized into the run manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub gen: GenSection,
    pub schedule: ScheduleSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub detect: DetectSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn schedule(&self) -> shsd_core::shs::DetectionSchedule {
        shsd_core::shs::DetectionSchedule {
            tau: self.schedule.tau,
            tau0: self.schedule.tau0,
            dt: self.schedule.dt,
        }
    }

    pub fn noise(&self) -> shsd_core::shs::NoiseSpec {
        shsd_core::shs::NoiseSpec {
            process_std: self.gen.process_std,
            meas_std: self.gen.meas_std,
            x0_std: self.gen.x0_std,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
