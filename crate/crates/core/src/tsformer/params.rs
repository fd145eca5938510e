//! Flat parameter storage with a named tensor layout.
//!
//! All trainable tensors live in one contiguous `Vec<f64>` in a fixed,
//! config-determined order. The optimizer, gradient checker, and checkpoint
//! writer all operate on the flat vector, so tensor order can never drift
//! between them.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tsformer::config::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorLayout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl TensorLayout {
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let mut push = |entries: &mut Vec<LayoutEntry>, name: String, rows: usize, cols: usize| {
            entries.push(LayoutEntry {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        };
        push(&mut entries, "embed.w".into(), cfg.n_features, d);
        push(&mut entries, "embed.b".into(), 1, d);
        for l in 0..cfg.layers {
            for t in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"] {
                let rows = if t.starts_with('b') { 1 } else { d };
                push(&mut entries, format!("l{l}.attn.{t}"), rows, d);
            }
            push(&mut entries, format!("l{l}.ln1.g"), 1, d);
            push(&mut entries, format!("l{l}.ln1.b"), 1, d);
            push(&mut entries, format!("l{l}.ffn.w1"), d, cfg.d_ff);
            push(&mut entries, format!("l{l}.ffn.b1"), 1, cfg.d_ff);
            push(&mut entries, format!("l{l}.ffn.w2"), cfg.d_ff, d);
            push(&mut entries, format!("l{l}.ffn.b2"), 1, d);
            push(&mut entries, format!("l{l}.ln2.g"), 1, d);
            push(&mut entries, format!("l{l}.ln2.b"), 1, d);
        }
        push(&mut entries, "head.w".into(), d, cfg.n_classes);
        push(&mut entries, "head.b".into(), 1, cfg.n_classes);
        Self {
            entries,
            total: offset,
        }
    }

    pub fn find(&self, name: &str) -> Result<&LayoutEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Validation(format!("no tensor named {name}")))
    }

    /// Coarse tensor grouping for diagnostics.
    pub fn group_of(name: &str) -> &'static str {
        if name.starts_with("embed.") {
            "embed"
        } else if name.contains(".attn.") {
            "attention"
        } else if name.contains(".ln") {
            "layernorm"
        } else if name.contains(".ffn.") {
            "ffn"
        } else {
            "head"
        }
    }
}

/// Flat f64 storage addressed through a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStore {
    pub layout: TensorLayout,
    pub data: Vec<f64>,
}

impl TensorStore {
    pub fn zeros(layout: TensorLayout) -> Self {
        let data = vec![0.0; layout.total];
        Self { layout, data }
    }

    pub fn view(&self, name: &str) -> ArrayView2<'_, f64> {
        let e = self.layout.find(name).expect("tensor name");
        ArrayView2::from_shape(
            (e.rows, e.cols),
            &self.data[e.offset..e.offset + e.rows * e.cols],
        )
        .expect("layout shape")
    }

    pub fn view_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let e = self.layout.find(name).expect("tensor name").clone();
        ArrayViewMut2::from_shape(
            (e.rows, e.cols),
            &mut self.data[e.offset..e.offset + e.rows * e.cols],
        )
        .expect("layout shape")
    }

    pub fn owned(&self, name: &str) -> Array2<f64> {
        self.view(name).to_owned()
    }

    /// Two disjoint mutable views; the named tensors must not overlap.
    pub fn views_mut2(
        &mut self,
        a: &str,
        b: &str,
    ) -> (ArrayViewMut2<'_, f64>, ArrayViewMut2<'_, f64>) {
        let ea = self.layout.find(a).expect("tensor name").clone();
        let eb = self.layout.find(b).expect("tensor name").clone();
        assert_ne!(ea.offset, eb.offset, "tensors must be distinct");
        let (first, second, swap) = if ea.offset < eb.offset {
            (ea.clone(), eb.clone(), false)
        } else {
            (eb.clone(), ea.clone(), true)
        };
        assert!(first.offset + first.rows * first.cols <= second.offset);
        let (lo, hi) = self.data.split_at_mut(second.offset);
        let va = ArrayViewMut2::from_shape(
            (first.rows, first.cols),
            &mut lo[first.offset..first.offset + first.rows * first.cols],
        )
        .expect("layout shape");
        let vb = ArrayViewMut2::from_shape(
            (second.rows, second.cols),
            &mut hi[..second.rows * second.cols],
        )
        .expect("layout shape");
        if swap {
            (vb, va)
        } else {
            (va, vb)
        }
    }
}

/// Model parameters: trainable flat store plus the fixed positional table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: TensorStore,
    /// Fixed sinusoidal positional encoding, seq_len x d_model.
    pub pos: Array2<f64>,
}

/// pos[k, 2i] = sin(k / 10000^(2i/d)), pos[k, 2i+1] = cos(k / 10000^(2i/d)).
pub fn sinusoidal_positions(seq_len: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((seq_len, d_model), |(k, j)| {
        let i = j / 2;
        let angle = k as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, unit LayerNorm gains. The draw
    /// order equals the layout order, so init is a pure function of
    /// (config, seed).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = TensorLayout::for_config(&config);
        let mut store = TensorStore::zeros(layout);
        let mut rng = stream_rng(seed, 0);
        for e in store.layout.entries.clone() {
            let slice = &mut store.data[e.offset..e.offset + e.rows * e.cols];
            let short = e.name.rsplit('.').next().unwrap();
            match short {
                "g" => slice.fill(1.0),
                _ if e.rows == 1 => slice.fill(0.0),
                _ => {
                    let limit = (6.0 / (e.rows + e.cols) as f64).sqrt();
                    for v in slice.iter_mut() {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
            }
        }
        let pos = sinusoidal_positions(config.seq_len, config.d_model);
        Ok(Self { config, store, pos })
    }

    pub fn n_params(&self) -> usize {
        self.store.layout.total
    }
}
