//! Model checkpoint file: architecture, flat parameters, and the
//! normalization stats plus fingerprint of the dataset it was trained on.

use std::io::Read as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tsformer::config::ModelConfig;
use crate::tsformer::params::{ModelParams, TensorLayout, TensorStore};

const MAGIC: &[u8; 4] = b"SHSM";
const VERSION: u32 = 1;

/// A trained model bundled with everything needed to score raw windows:
/// the feature normalization travels with the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Fingerprint of the dataset used for training.
    pub dataset_fingerprint: [u8; 32],
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        dataset_fingerprint: [u8; 32],
        norm_mean: Vec<f64>,
        norm_std: Vec<f64>,
    ) -> Result<Self> {
        if norm_mean.len() != params.config.n_features
            || norm_std.len() != params.config.n_features
        {
            return Err(Error::Dimension(format!(
                "stats have {}/{} entries for {} features",
                norm_mean.len(),
                norm_std.len(),
                params.config.n_features
            )));
        }
        Ok(Self {
            params,
            dataset_fingerprint,
            norm_mean,
            norm_std,
        })
    }

    fn payload(&self) -> Vec<u8> {
        let cfg = &self.params.config;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            cfg.layers as u32,
            cfg.heads as u32,
            cfg.d_model as u32,
            cfg.d_ff as u32,
            cfg.seq_len as u32,
            cfg.n_features as u32,
            cfg.n_classes as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&cfg.dropout.to_le_bytes());
        // parameters in layout order; the layout is a pure function of the
        // config, so shapes and order are reproducible on read
        for v in &self.params.store.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.dataset_fingerprint);
        for v in self.norm_mean.iter().chain(&self.norm_std) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = self.payload();
        let hash = Sha256::digest(&buf);
        buf.extend_from_slice(&hash);
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = crate::bytes::Cursor::new(buf);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, not a checkpoint file"
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let layers = r.u32()? as usize;
        let heads = r.u32()? as usize;
        let d_model = r.u32()? as usize;
        let d_ff = r.u32()? as usize;
        let seq_len = r.u32()? as usize;
        let n_features = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let dropout = r.f64()?;
        let config = ModelConfig {
            layers,
            heads,
            d_model,
            d_ff,
            seq_len,
            n_features,
            n_classes,
            dropout,
        };
        config.validate()?;
        let layout = TensorLayout::for_config(&config);
        let mut store = TensorStore::zeros(layout);
        for i in 0..store.data.len() {
            store.data[i] = r.f64()?;
        }
        let mut dataset_fingerprint = [0u8; 32];
        dataset_fingerprint.copy_from_slice(r.take(32)?);
        let mut norm_mean = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            norm_mean.push(r.f64()?);
        }
        let mut norm_std = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            norm_std.push(r.f64()?);
        }
        let payload_end = r.pos;
        let stored = r.take(32)?;
        r.expect_end()?;
        let actual = Sha256::digest(&buf[..payload_end]);
        if stored != actual.as_slice() {
            return Err(Error::Fingerprint(
                "checkpoint hash mismatch: file is corrupt or was edited".into(),
            ));
        }
        let pos_enc = super::params::sinusoidal_positions(seq_len, d_model);
        let params = ModelParams {
            config,
            store,
            pos: pos_enc,
        };
        Checkpoint::new(params, dataset_fingerprint, norm_mean, norm_std)
    }
}
