//! Central-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::Result;
use crate::tsformer::config::ModelConfig;
use crate::tsformer::model::{backward, cross_entropy, forward};
use crate::tsformer::params::{ModelParams, TensorLayout, TensorStore};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per tensor group.
    pub per_group: BTreeMap<String, f64>,
    pub max_rel_err: f64,
    pub n_params: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare analytic gradients against central finite differences of the loss
/// over every parameter. `corrupt` optionally tampers with the analytic
/// gradients first; it exists so callers can prove the check would catch a
/// wrong derivative.
pub fn grad_check(
    params: &mut ModelParams,
    x: &Array2<f64>,
    labels: &[u8],
    step: f64,
    corrupt: Option<&dyn Fn(&mut TensorStore)>,
) -> Result<GradCheckReport> {
    let cache = forward(params, x, None)?;
    let mut analytic = backward(params, &cache, labels)?;
    if let Some(f) = corrupt {
        f(&mut analytic);
    }

    let mut per_group: BTreeMap<String, f64> = BTreeMap::new();
    let mut max_rel = 0.0f64;
    let entries = params.store.layout.entries.clone();
    for e in &entries {
        let group = TensorLayout::group_of(&e.name).to_string();
        let entry = per_group.entry(group).or_insert(0.0);
        for i in e.offset..e.offset + e.rows * e.cols {
            let orig = params.store.data[i];
            params.store.data[i] = orig + step;
            let plus = cross_entropy(&forward(params, x, None)?, labels)?;
            params.store.data[i] = orig - step;
            let minus = cross_entropy(&forward(params, x, None)?, labels)?;
            params.store.data[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data[i];
            // Denominator floor sits well above the central-difference noise
            // (~eps/step = 1e-11), so near-zero gradients cannot produce
            // spurious relative errors.
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            if rel > *entry {
                *entry = rel;
            }
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(GradCheckReport {
        per_group,
        max_rel_err: max_rel,
        n_params: params.store.layout.total,
    })
}

/// Small dense configuration exercising every tensor kind.
pub fn check_config() -> ModelConfig {
    ModelConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        seq_len: 4,
        n_features: 3,
        n_classes: 3,
        dropout: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn setup() -> (ModelParams, Array2<f64>, Vec<u8>) {
        let cfg = check_config();
        let params = ModelParams::init(cfg, 12).unwrap();
        let mut rng = stream_rng(13, 0);
        let x = Array2::from_shape_fn((2 * cfg.seq_len, cfg.n_features), |_| {
            rng.gen_range(-1.0..1.0)
        });
        (params, x, vec![0, 2])
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (mut params, x, labels) = setup();
        let report = grad_check(&mut params, &x, &labels, DEFAULT_STEP, None).unwrap();
        assert!(
            report.passes(DEFAULT_TOL),
            "max rel err {:.3e}, per group {:?}",
            report.max_rel_err,
            report.per_group
        );
        // every group was actually exercised
        for g in ["embed", "attention", "layernorm", "ffn", "head"] {
            assert!(report.per_group.contains_key(g), "missing group {g}");
        }
    }

    #[test]
    fn corrupted_output_projection_gradient_is_caught() {
        let (mut params, x, labels) = setup();
        let report = grad_check(
            &mut params,
            &x,
            &labels,
            DEFAULT_STEP,
            Some(&|g: &mut TensorStore| {
                let mut w = g.view_mut("l0.attn.wo");
                w *= 1.1;
            }),
        )
        .unwrap();
        assert!(!report.passes(DEFAULT_TOL));
        assert!(report.per_group["attention"] > DEFAULT_TOL);
        assert!(report.per_group["head"] <= DEFAULT_TOL);
    }

    #[test]
    fn missing_attention_scale_is_caught() {
        // Multiplying the q/k gradients by sqrt(d_head) mimics forgetting the
        // 1/sqrt(d_head) factor in the score gradient.
        let (mut params, x, labels) = setup();
        let scale = (check_config().d_head() as f64).sqrt();
        let report = grad_check(
            &mut params,
            &x,
            &labels,
            DEFAULT_STEP,
            Some(&move |g: &mut TensorStore| {
                for t in ["l0.attn.wq", "l0.attn.wk"] {
                    let mut w = g.view_mut(t);
                    w *= scale;
                }
            }),
        )
        .unwrap();
        assert!(!report.passes(DEFAULT_TOL));
        assert!(report.per_group["attention"] > DEFAULT_TOL);
    }
}
