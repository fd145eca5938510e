//! Encoder forward and exact backward passes.
//!
//! A batch of B windows is stacked into one (B*S) x d activation matrix so
//! projections and FFN layers run as single matrix products; only the S x S
//! attention maps are computed per window and head. Post-LN arrangement:
//! LayerNorm is applied after each residual sum.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tsformer::params::{ModelParams, TensorStore};

const LN_EPS: f64 = 1e-9;
const LOG_FLOOR: f64 = 1e-12;

/// Per-layer activations retained for the backward pass.
struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention maps, indexed [window * heads + head], each S x S.
    p: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    mask_attn: Option<Array2<f64>>,
    xhat1: Array2<f64>,
    inv_std1: Array1<f64>,
    h1: Array2<f64>,
    a1: Array2<f64>,
    mask_ffn: Option<Array2<f64>>,
    xhat2: Array2<f64>,
    inv_std2: Array1<f64>,
}

/// Everything backward needs from one forward call.
pub struct ForwardCache {
    x0: Array2<f64>,
    mask_embed: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    pooled: Array2<f64>,
    pub probs: Array2<f64>,
    batch: usize,
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Returns (normalized output, xhat, per-row 1/sigma).
fn layer_norm(
    x: &Array2<f64>,
    gain: &ndarray::ArrayView2<f64>,
    bias: &ndarray::ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        let mut var = 0.0;
        for v in row.iter() {
            let c = v - mean;
            var += c * c;
        }
        var /= d;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for v in row.iter_mut() {
            *v = (*v - mean) * is;
        }
    }
    let out = &xhat * gain + bias;
    (out, xhat, inv_std)
}

/// dx for y = gain * xhat + bias, accumulating gain/bias grads.
fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: &ndarray::ArrayView2<f64>,
    dgain: &mut ndarray::ArrayViewMut2<f64>,
    dbias: &mut ndarray::ArrayViewMut2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    let mut dg = dy * xhat;
    let dg_sum = dg.sum_axis(Axis(0));
    let db_sum = dy.sum_axis(Axis(0));
    for (j, v) in dg_sum.iter().enumerate() {
        dgain[(0, j)] += v;
    }
    for (j, v) in db_sum.iter().enumerate() {
        dbias[(0, j)] += v;
    }
    // reuse dg buffer for dxhat
    dg = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dxhat = dg.row(i);
        let xh = xhat.row(i);
        let mean1 = dxhat.sum() / d;
        let mean2 = dxhat.dot(&xh) / d;
        let is = inv_std[i];
        for j in 0..dy.ncols() {
            dx[(i, j)] = is * (dxhat[j] - mean1 - xh[j] * mean2);
        }
    }
    dx
}

/// Inverted-dropout mask: entries are 0 or 1/(1-p). Draw order is row-major.
fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.gen::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

fn apply_mask(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

fn maybe_mask(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Option<Array2<f64>> {
    match rng {
        Some(r) if p > 0.0 => Some(dropout_mask(rows, cols, p, r)),
        _ => None,
    }
}

/// Run the encoder on a stacked batch. `x0` is (B*S) x M with window b in
/// rows b*S..(b+1)*S. Dropout is active only when `dropout_rng` is given.
pub fn forward(
    params: &ModelParams,
    x0: &Array2<f64>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardCache> {
    let cfg = &params.config;
    let s_len = cfg.seq_len;
    let d = cfg.d_model;
    let dk = cfg.d_head();
    let scale = 1.0 / (dk as f64).sqrt();
    if x0.ncols() != cfg.n_features || x0.nrows() % s_len != 0 || x0.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "batch is {:?}, expected (k*{s_len}) x {}",
            x0.shape(),
            cfg.n_features
        )));
    }
    let batch = x0.nrows() / s_len;
    let rows = x0.nrows();

    let mut act = x0.dot(&params.store.view("embed.w")) + params.store.view("embed.b");
    for b in 0..batch {
        let mut block = act.slice_mut(s![b * s_len..(b + 1) * s_len, ..]);
        block += &params.pos;
    }
    let mask_embed = maybe_mask(rows, d, cfg.dropout, &mut dropout_rng);
    apply_mask(&mut act, &mask_embed);

    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let x = act;
        let q = x.dot(&params.store.view(&format!("l{l}.attn.wq")))
            + params.store.view(&format!("l{l}.attn.bq"));
        let k = x.dot(&params.store.view(&format!("l{l}.attn.wk")))
            + params.store.view(&format!("l{l}.attn.bk"));
        let v = x.dot(&params.store.view(&format!("l{l}.attn.wv")))
            + params.store.view(&format!("l{l}.attn.bv"));

        let mut ctx = Array2::zeros((rows, d));
        let mut p_maps = Vec::with_capacity(batch * cfg.heads);
        for b in 0..batch {
            for h in 0..cfg.heads {
                let r = s![b * s_len..(b + 1) * s_len, h * dk..(h + 1) * dk];
                let qh = q.slice(r);
                let kh = k.slice(r);
                let vh = v.slice(r);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                softmax_rows(&mut scores);
                let out = scores.dot(&vh);
                ctx.slice_mut(r).assign(&out);
                p_maps.push(scores);
            }
        }
        let mut o = ctx.dot(&params.store.view(&format!("l{l}.attn.wo")))
            + params.store.view(&format!("l{l}.attn.bo"));
        let mask_attn = maybe_mask(rows, d, cfg.dropout, &mut dropout_rng);
        apply_mask(&mut o, &mask_attn);
        let r1 = &x + &o;
        let (h1, xhat1, inv_std1) = layer_norm(
            &r1,
            &params.store.view(&format!("l{l}.ln1.g")),
            &params.store.view(&format!("l{l}.ln1.b")),
        );

        let mut a1 = h1.dot(&params.store.view(&format!("l{l}.ffn.w1")))
            + params.store.view(&format!("l{l}.ffn.b1"));
        a1.mapv_inplace(|v| v.max(0.0));
        let mut f = a1.dot(&params.store.view(&format!("l{l}.ffn.w2")))
            + params.store.view(&format!("l{l}.ffn.b2"));
        let mask_ffn = maybe_mask(rows, d, cfg.dropout, &mut dropout_rng);
        apply_mask(&mut f, &mask_ffn);
        let r2 = &h1 + &f;
        let (out, xhat2, inv_std2) = layer_norm(
            &r2,
            &params.store.view(&format!("l{l}.ln2.g")),
            &params.store.view(&format!("l{l}.ln2.b")),
        );

        layers.push(LayerCache {
            x,
            q,
            k,
            v,
            p: p_maps,
            ctx,
            mask_attn,
            xhat1,
            inv_std1,
            h1,
            a1,
            mask_ffn,
            xhat2,
            inv_std2,
        });
        act = out;
    }

    let mut pooled = Array2::zeros((batch, d));
    for b in 0..batch {
        let block = act.slice(s![b * s_len..(b + 1) * s_len, ..]);
        pooled
            .row_mut(b)
            .assign(&(block.sum_axis(Axis(0)) / s_len as f64));
    }
    let mut probs = pooled.dot(&params.store.view("head.w")) + params.store.view("head.b");
    softmax_rows(&mut probs);

    Ok(ForwardCache {
        x0: x0.clone(),
        mask_embed,
        layers,
        pooled,
        probs,
        batch,
    })
}

/// Mean cross-entropy of the cached batch against integer labels.
pub fn cross_entropy(cache: &ForwardCache, labels: &[u8]) -> Result<f64> {
    if labels.len() != cache.batch {
        return Err(Error::Dimension(format!(
            "{} labels for batch of {}",
            labels.len(),
            cache.batch
        )));
    }
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        if y as usize >= cache.probs.ncols() {
            return Err(Error::Validation(format!("label {y} out of range")));
        }
        loss -= cache.probs[(b, y as usize)].max(LOG_FLOOR).ln();
    }
    Ok(loss / cache.batch as f64)
}

/// Exact gradients of the mean cross-entropy w.r.t. every trainable tensor.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<TensorStore> {
    let cfg = &params.config;
    let s_len = cfg.seq_len;
    let d = cfg.d_model;
    let dk = cfg.d_head();
    let scale = 1.0 / (dk as f64).sqrt();
    let batch = cache.batch;
    if labels.len() != batch {
        return Err(Error::Dimension(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    let mut grads = TensorStore::zeros(params.store.layout.clone());

    // softmax + cross-entropy head
    let mut dlogits = cache.probs.clone();
    for (b, &y) in labels.iter().enumerate() {
        dlogits[(b, y as usize)] -= 1.0;
    }
    dlogits /= batch as f64;

    {
        let gw = cache.pooled.t().dot(&dlogits);
        let mut w = grads.view_mut("head.w");
        w += &gw;
        let gb = dlogits.sum_axis(Axis(0));
        let mut bv = grads.view_mut("head.b");
        for (j, g) in gb.iter().enumerate() {
            bv[(0, j)] += g;
        }
    }
    let dpooled = dlogits.dot(&params.store.view("head.w").t());
    let mut dact: Array2<f64> = Array2::zeros((batch * s_len, d));
    for b in 0..batch {
        let row = &dpooled.row(b) / s_len as f64;
        for k in 0..s_len {
            dact.row_mut(b * s_len + k).assign(&row);
        }
    }

    for l in (0..cfg.layers).rev() {
        let lc = &cache.layers[l];

        // LN2
        let dr2 = {
            let gain = params.store.view(&format!("l{l}.ln2.g"));
            let (mut dg, mut db) = grads.views_mut2(&format!("l{l}.ln2.g"), &format!("l{l}.ln2.b"));
            layer_norm_backward(&dact, &lc.xhat2, &lc.inv_std2, &gain, &mut dg, &mut db)
        };

        // FFN branch
        let mut df = dr2.clone();
        apply_mask(&mut df, &lc.mask_ffn);
        {
            let gw = lc.a1.t().dot(&df);
            let mut w = grads.view_mut(&format!("l{l}.ffn.w2"));
            w += &gw;
            let gb = df.sum_axis(Axis(0));
            let mut bv = grads.view_mut(&format!("l{l}.ffn.b2"));
            for (j, g) in gb.iter().enumerate() {
                bv[(0, j)] += g;
            }
        }
        let mut dz1 = df.dot(&params.store.view(&format!("l{l}.ffn.w2")).t());
        ndarray::Zip::from(&mut dz1).and(&lc.a1).for_each(|g, a| {
            if *a <= 0.0 {
                *g = 0.0;
            }
        });
        {
            let gw = lc.h1.t().dot(&dz1);
            let mut w = grads.view_mut(&format!("l{l}.ffn.w1"));
            w += &gw;
            let gb = dz1.sum_axis(Axis(0));
            let mut bv = grads.view_mut(&format!("l{l}.ffn.b1"));
            for (j, g) in gb.iter().enumerate() {
                bv[(0, j)] += g;
            }
        }
        let dh1 = &dr2 + &dz1.dot(&params.store.view(&format!("l{l}.ffn.w1")).t());

        // LN1
        let dr1 = {
            let gain = params.store.view(&format!("l{l}.ln1.g"));
            let (mut dg, mut db) = grads.views_mut2(&format!("l{l}.ln1.g"), &format!("l{l}.ln1.b"));
            layer_norm_backward(&dh1, &lc.xhat1, &lc.inv_std1, &gain, &mut dg, &mut db)
        };

        // attention branch
        let mut do_ = dr1.clone();
        apply_mask(&mut do_, &lc.mask_attn);
        {
            let gw = lc.ctx.t().dot(&do_);
            let mut w = grads.view_mut(&format!("l{l}.attn.wo"));
            w += &gw;
            let gb = do_.sum_axis(Axis(0));
            let mut bv = grads.view_mut(&format!("l{l}.attn.bo"));
            for (j, g) in gb.iter().enumerate() {
                bv[(0, j)] += g;
            }
        }
        let dctx = do_.dot(&params.store.view(&format!("l{l}.attn.wo")).t());

        let mut dq: Array2<f64> = Array2::zeros((batch * s_len, d));
        let mut dkm: Array2<f64> = Array2::zeros((batch * s_len, d));
        let mut dv: Array2<f64> = Array2::zeros((batch * s_len, d));
        for b in 0..batch {
            for h in 0..cfg.heads {
                let r = s![b * s_len..(b + 1) * s_len, h * dk..(h + 1) * dk];
                let p = &lc.p[b * cfg.heads + h];
                let dctx_h = dctx.slice(r);
                let vh = lc.v.slice(r);
                let dp = dctx_h.dot(&vh.t());
                dv.slice_mut(r).assign(&p.t().dot(&dctx_h));
                // softmax backward per row: ds = p * (dp - sum(dp * p))
                let mut dscores = Array2::zeros((s_len, s_len));
                for i in 0..s_len {
                    let dot: f64 = dp.row(i).dot(&p.row(i));
                    for j in 0..s_len {
                        dscores[(i, j)] = p[(i, j)] * (dp[(i, j)] - dot);
                    }
                }
                dscores *= scale;
                let qh = lc.q.slice(r);
                let kh = lc.k.slice(r);
                dq.slice_mut(r).assign(&dscores.dot(&kh));
                dkm.slice_mut(r).assign(&dscores.t().dot(&qh));
            }
        }
        for (name, dmat) in [("wq", &dq), ("wk", &dkm), ("wv", &dv)] {
            let gw = lc.x.t().dot(dmat);
            let mut w = grads.view_mut(&format!("l{l}.attn.{name}"));
            w += &gw;
            let gb = dmat.sum_axis(Axis(0));
            let bname = format!("l{l}.attn.b{}", &name[1..]);
            let mut bv = grads.view_mut(&bname);
            for (j, g) in gb.iter().enumerate() {
                bv[(0, j)] += g;
            }
        }
        let mut dx = dr1;
        dx += &dq.dot(&params.store.view(&format!("l{l}.attn.wq")).t());
        dx += &dkm.dot(&params.store.view(&format!("l{l}.attn.wk")).t());
        dx += &dv.dot(&params.store.view(&format!("l{l}.attn.wv")).t());
        dact = dx;
    }

    apply_mask(&mut dact, &cache.mask_embed);
    {
        let gw = cache.x0.t().dot(&dact);
        let mut w = grads.view_mut("embed.w");
        w += &gw;
        let gb = dact.sum_axis(Axis(0));
        let mut bv = grads.view_mut("embed.b");
        for (j, g) in gb.iter().enumerate() {
            bv[(0, j)] += g;
        }
    }
    Ok(grads)
}

/// Classify one standardized window: (predicted class, class probabilities).
pub fn predict(params: &ModelParams, window: &Array2<f64>) -> Result<(usize, Vec<f64>)> {
    if window.nrows() != params.config.seq_len {
        return Err(Error::Dimension(format!(
            "window has {} rows, expected {}",
            window.nrows(),
            params.config.seq_len
        )));
    }
    let cache = forward(params, window, None)?;
    let row = cache.probs.row(0);
    let (argmax, _) = row
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    Ok((argmax, row.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::tsformer::config::ModelConfig;

    fn tiny(dropout: f64) -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            seq_len: 4,
            n_features: 3,
            n_classes: 3,
            dropout,
        }
    }

    fn batch(cfg: &ModelConfig, b: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, 1);
        Array2::from_shape_fn((b * cfg.seq_len, cfg.n_features), |_| {
            rng.gen_range(-1.0..1.0)
        })
    }

    #[test]
    fn probabilities_are_normalized() {
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 0).unwrap();
        let x = batch(&cfg, 3, 9);
        let cache = forward(&params, &x, None).unwrap();
        assert_eq!(cache.probs.shape(), [3, 3]);
        for row in cache.probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn forward_is_deterministic_without_dropout() {
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 0).unwrap();
        let x = batch(&cfg, 2, 9);
        let a = forward(&params, &x, None).unwrap();
        let b = forward(&params, &x, None).unwrap();
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn dropout_changes_outputs_and_is_seeded() {
        let cfg = tiny(0.5);
        let params = ModelParams::init(cfg, 0).unwrap();
        let x = batch(&cfg, 2, 9);
        let clean = forward(&params, &x, None).unwrap();
        let mut r1 = stream_rng(3, 0);
        let mut r2 = stream_rng(3, 0);
        let d1 = forward(&params, &x, Some(&mut r1)).unwrap();
        let d2 = forward(&params, &x, Some(&mut r2)).unwrap();
        assert_eq!(d1.probs, d2.probs);
        assert_ne!(clean.probs, d1.probs);
    }

    #[test]
    fn batch_invariance_of_single_window() {
        // Window 0 scored alone equals window 0 scored inside a batch.
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 4).unwrap();
        let x = batch(&cfg, 3, 10);
        let full = forward(&params, &x, None).unwrap();
        let solo = forward(
            &params,
            &x.slice(s![0..cfg.seq_len, ..]).to_owned(),
            None,
        )
        .unwrap();
        for j in 0..cfg.n_classes {
            assert!((full.probs[(0, j)] - solo.probs[(0, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_of_uniform_head_is_ln_classes() {
        // Zeroed head weights give uniform class probabilities.
        let cfg = tiny(0.0);
        let mut params = ModelParams::init(cfg, 0).unwrap();
        params.store.view_mut("head.w").fill(0.0);
        params.store.view_mut("head.b").fill(0.0);
        let x = batch(&cfg, 4, 2);
        let cache = forward(&params, &x, None).unwrap();
        let loss = cross_entropy(&cache, &[0, 1, 2, 0]).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_have_param_shape_and_are_finite() {
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 0).unwrap();
        let x = batch(&cfg, 2, 9);
        let cache = forward(&params, &x, None).unwrap();
        let grads = backward(&params, &cache, &[0, 2]).unwrap();
        assert_eq!(grads.data.len(), params.store.data.len());
        assert!(grads.data.iter().all(|v| v.is_finite()));
        assert!(grads.data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn predict_matches_forward() {
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 1).unwrap();
        let x = batch(&cfg, 1, 5);
        let cache = forward(&params, &x, None).unwrap();
        let (class, probs) = predict(&params, &x).unwrap();
        assert_eq!(probs.len(), 3);
        assert_eq!(probs, cache.probs.row(0).to_vec());
        let best: f64 = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(probs[class], best);
    }

    #[test]
    fn label_and_shape_errors() {
        let cfg = tiny(0.0);
        let params = ModelParams::init(cfg, 0).unwrap();
        let x = batch(&cfg, 2, 9);
        let cache = forward(&params, &x, None).unwrap();
        assert!(cross_entropy(&cache, &[0]).is_err());
        assert!(cross_entropy(&cache, &[0, 9]).is_err());
        let bad = Array2::zeros((5, cfg.n_features));
        assert!(forward(&params, &bad, None).is_err());
    }
}
