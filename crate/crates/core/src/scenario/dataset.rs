//! Labeled window dataset: stratified splitting, normalization statistics,
//! and a fingerprinted binary file format.

use std::io::Read as _;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::mix;

const MAGIC: &[u8; 4] = b"SHSD";
const VERSION: u32 = 1;
const STD_FLOOR: f64 = 1e-8;
// Keeps split shuffling on a stream disjoint from scenario generation.
const SPLIT_STREAM: u64 = 0x53504c49;

/// One detection window: S x M feature matrix (row k is sample k) plus its
/// class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub z: Array2<f64>,
    pub label: u8,
}

/// Full labeled dataset with split indices and train-set normalization stats.
///
/// Stats default to mean 0 / std 1 until `split` computes them from the
/// training portion; test windows never influence them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub windows: Vec<Window>,
    pub s: usize,
    pub m: usize,
    pub n_classes: usize,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub train_idx: Vec<u32>,
    pub test_idx: Vec<u32>,
}

impl Dataset {
    pub fn new(windows: Vec<Window>, s: usize, m: usize, n_classes: usize) -> Result<Self> {
        let ds = Self {
            windows,
            s,
            m,
            n_classes,
            norm_mean: vec![0.0; m],
            norm_std: vec![1.0; m],
            train_idx: Vec::new(),
            test_idx: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.m == 0 || self.n_classes == 0 {
            return Err(Error::Validation("dataset dimensions must be positive".into()));
        }
        for (i, w) in self.windows.iter().enumerate() {
            if w.z.shape() != [self.s, self.m] {
                return Err(Error::Dimension(format!(
                    "window {i} has shape {:?}, expected [{}, {}]",
                    w.z.shape(),
                    self.s,
                    self.m
                )));
            }
            if (w.label as usize) >= self.n_classes {
                return Err(Error::Validation(format!(
                    "window {i} has label {} outside {} classes",
                    w.label, self.n_classes
                )));
            }
            if w.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("window {i} has non-finite values")));
            }
        }
        if self.norm_mean.len() != self.m || self.norm_std.len() != self.m {
            return Err(Error::Dimension("stats length must equal feature count".into()));
        }
        for idx in self.train_idx.iter().chain(&self.test_idx) {
            if *idx as usize >= self.windows.len() {
                return Err(Error::Validation(format!("split index {idx} out of range")));
            }
        }
        Ok(())
    }

    /// Stratified train/test split. Shuffles within each class with a
    /// class-specific seeded stream, then computes normalization statistics
    /// from the training windows only.
    pub fn split(&mut self, train_frac: f64, seed: u64) -> Result<()> {
        use rand::seq::SliceRandom;
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::Validation(format!(
                "train fraction must be in (0, 1), got {train_frac}"
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in 0..self.n_classes {
            let mut idx: Vec<u32> = (0..self.windows.len() as u32)
                .filter(|i| self.windows[*i as usize].label as usize == class)
                .collect();
            if idx.is_empty() {
                continue;
            }
            if idx.len() < 2 {
                return Err(Error::Validation(format!(
                    "class {class} has {} window(s); need at least 2 to split",
                    idx.len()
                )));
            }
            let mut rng = crate::rng::stream_rng(mix(seed, SPLIT_STREAM), class as u64);
            idx.shuffle(&mut rng);
            let n_train = ((idx.len() as f64 * train_frac).round() as usize)
                .clamp(1, idx.len() - 1);
            train.extend_from_slice(&idx[..n_train]);
            test.extend_from_slice(&idx[n_train..]);
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::Validation("split produced an empty partition".into()));
        }
        train.sort_unstable();
        test.sort_unstable();
        self.train_idx = train;
        self.test_idx = test;
        self.compute_stats();
        Ok(())
    }

    fn compute_stats(&mut self) {
        let count = (self.train_idx.len() * self.s) as f64;
        let mut mean = vec![0.0; self.m];
        for &i in &self.train_idx {
            for row in self.windows[i as usize].z.rows() {
                for (j, v) in row.iter().enumerate() {
                    mean[j] += v;
                }
            }
        }
        for v in mean.iter_mut() {
            *v /= count;
        }
        let mut var = vec![0.0; self.m];
        for &i in &self.train_idx {
            for row in self.windows[i as usize].z.rows() {
                for (j, v) in row.iter().enumerate() {
                    let d = v - mean[j];
                    var[j] += d * d;
                }
            }
        }
        self.norm_std = var
            .iter()
            .map(|v| (v / count).sqrt().max(STD_FLOOR))
            .collect();
        self.norm_mean = mean;
    }

    /// Window `i` standardized with the stored train statistics.
    pub fn normalized_window(&self, i: usize) -> Array2<f64> {
        let mut z = self.windows[i].z.clone();
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.norm_mean[j]) / self.norm_std[j];
            }
        }
        z
    }

    /// Apply external stats (e.g. from a checkpoint) to an arbitrary window.
    pub fn standardize(z: &Array2<f64>, mean: &[f64], std: &[f64]) -> Result<Array2<f64>> {
        if z.ncols() != mean.len() || z.ncols() != std.len() {
            return Err(Error::Dimension(format!(
                "window has {} features but stats have {}/{}",
                z.ncols(),
                mean.len(),
                std.len()
            )));
        }
        let mut out = z.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j].max(STD_FLOOR);
            }
        }
        Ok(out)
    }

    fn payload(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(
            24 + self.windows.len() * (self.s * self.m * 8 + 1)
                + 16 * self.m
                + 8
                + 4 * (self.train_idx.len() + self.test_idx.len()),
        );
        buf.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.s as u32,
            self.m as u32,
            self.windows.len() as u32,
            self.n_classes as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for w in &self.windows {
            for v in w.z.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(w.label);
        }
        for v in self.norm_mean.iter().chain(&self.norm_std) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.train_idx.len() as u32).to_le_bytes());
        for i in &self.train_idx {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        buf.extend_from_slice(&(self.test_idx.len() as u32).to_le_bytes());
        for i in &self.test_idx {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        buf
    }

    /// SHA-256 over the serialized content, excluding the trailing hash
    /// itself. Identical datasets always hash identically.
    pub fn fingerprint(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.payload());
        digest.into()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut buf = self.payload();
        let fp = Sha256::digest(&buf);
        buf.extend_from_slice(&fp);
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
            return Err(Error::Format(format!("bad magic {magic:?}, not a dataset file")));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version}, expected {VERSION}"
            )));
        }
        let s = r.u32()? as usize;
        let m = r.u32()? as usize;
        let n_windows = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let mut windows = Vec::with_capacity(n_windows);
        for _ in 0..n_windows {
            let mut vals = Vec::with_capacity(s * m);
            for _ in 0..s * m {
                vals.push(r.f64()?);
            }
            let z = Array2::from_shape_vec((s, m), vals)
                .map_err(|e| Error::Format(e.to_string()))?;
            let label = r.take(1)?[0];
            windows.push(Window { z, label });
        }
        let mut norm_mean = Vec::with_capacity(m);
        for _ in 0..m {
            norm_mean.push(r.f64()?);
        }
        let mut norm_std = Vec::with_capacity(m);
        for _ in 0..m {
            norm_std.push(r.f64()?);
        }
        let n_train = r.u32()? as usize;
        let mut train_idx = Vec::with_capacity(n_train);
        for _ in 0..n_train {
            train_idx.push(r.u32()?);
        }
        let n_test = r.u32()? as usize;
        let mut test_idx = Vec::with_capacity(n_test);
        for _ in 0..n_test {
            test_idx.push(r.u32()?);
        }
        let payload_end = r.pos;
        let stored = r.take(32)?;
        r.expect_end()?;
        let actual = Sha256::digest(&buf[..payload_end]);
        if stored != actual.as_slice() {
            return Err(Error::Fingerprint(
                "dataset fingerprint mismatch: file is corrupt or was edited".into(),
            ));
        }
        let ds = Self {
            windows,
            s,
            m,
            n_classes,
            norm_mean,
            norm_std,
            train_idx,
            test_idx,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Flat CSV export: one row per (window, sample).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_id,t");
        for j in 0..self.m {
            out.push_str(&format!(",f{j}"));
        }
        out.push_str(",label\n");
        for (i, w) in self.windows.iter().enumerate() {
            for (k, row) in w.z.rows().into_iter().enumerate() {
                out.push_str(&format!("{i},{k}"));
                for v in row.iter() {
                    out.push_str(&format!(",{}", crate::matio::fmt_g17(*v)));
                }
                out.push_str(&format!(",{}\n", w.label));
            }
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for w in &self.windows {
            counts[w.label as usize] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize) -> Dataset {
        let mut windows = Vec::new();
        for c in 0..3u8 {
            for i in 0..n_per_class {
                let z = Array2::from_shape_fn((4, 2), |(k, j)| {
                    c as f64 * 10.0 + i as f64 + 0.1 * k as f64 + 0.01 * j as f64
                });
                windows.push(Window { z, label: c });
            }
        }
        Dataset::new(windows, 4, 2, 3).unwrap()
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let mut ds = toy(10);
        ds.split(0.8, 42).unwrap();
        assert_eq!(ds.train_idx.len(), 24);
        assert_eq!(ds.test_idx.len(), 6);
        for c in 0..3 {
            let n = ds
                .test_idx
                .iter()
                .filter(|i| ds.windows[**i as usize].label == c)
                .count();
            assert_eq!(n, 2, "class {c}");
        }
        let mut all: Vec<u32> = ds.train_idx.iter().chain(&ds.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<u32>>());
    }

    #[test]
    fn split_deterministic_in_seed() {
        let mut a = toy(10);
        let mut b = toy(10);
        a.split(0.8, 7).unwrap();
        b.split(0.8, 7).unwrap();
        assert_eq!(a, b);
        let mut c = toy(10);
        c.split(0.8, 8).unwrap();
        assert_ne!(a.train_idx, c.train_idx);
    }

    #[test]
    fn stats_come_from_train_only() {
        let mut ds = toy(5);
        ds.split(0.8, 1).unwrap();
        // Oracle: recompute the mean over train windows by hand.
        let mut sum = 0.0;
        let mut n = 0.0;
        for &i in &ds.train_idx {
            for row in ds.windows[i as usize].z.rows() {
                sum += row[0];
                n += 1.0;
            }
        }
        assert!((ds.norm_mean[0] - sum / n).abs() < 1e-12);
        assert!(ds.norm_std.iter().all(|v| *v >= 1e-8));
        // Normalized train features have mean ~0.
        let mut norm_sum = 0.0;
        for &i in &ds.train_idx {
            norm_sum += ds.normalized_window(i as usize).column(0).sum();
        }
        assert!((norm_sum / n).abs() < 1e-10);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = toy(4);
        ds.split(0.75, 3).unwrap();
        let path = dir.path().join("toy.shsd");
        ds.write_file(&path).unwrap();
        let back = Dataset::read_file(&path).unwrap();
        assert_eq!(ds, back);
        assert_eq!(ds.fingerprint(), back.fingerprint());
    }

    #[test]
    fn expected_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = toy(4);
        ds.split(0.75, 3).unwrap();
        let path = dir.path().join("toy.shsd");
        ds.write_file(&path).unwrap();
        // header 24 + 12*(4*2*8+1) + 2*2*8 + (4+9*4) + (4+3*4) + 32
        let expect = 24 + 12 * 65 + 32 + 40 + 16 + 32;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expect as u64);
    }

    #[test]
    fn corruption_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(2);
        let path = dir.path().join("toy.shsd");
        ds.write_file(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        // flip one data byte: fingerprint mismatch
        let mut bad = bytes.clone();
        bad[40] ^= 0xff;
        assert!(matches!(
            Dataset::from_bytes(&bad),
            Err(Error::Fingerprint(_))
        ));

        // truncation
        assert!(matches!(
            Dataset::from_bytes(&bytes[..bytes.len() - 10]),
            Err(Error::Format(_))
        ));

        // bad magic
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let ds = toy(1);
        let csv = ds.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "window_id,t,f0,f1,label");
        assert_eq!(lines.len(), 1 + 3 * 4);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[1].ends_with(",0"));
    }

    #[test]
    fn tiny_class_split_rejected() {
        let mut ds = toy(1);
        assert!(ds.split(0.8, 0).is_err());
    }
}
