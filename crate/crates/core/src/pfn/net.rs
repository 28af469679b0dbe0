//! Forward and backward passes of the in-context regressor.
//!
//! Rows are ordered context first, then queries. Every row attends to the
//! context rows; a query row additionally attends to itself and to no other
//! query, so each query's output is independent of the other queries.

use crate::pfn::buckets::{bucket_index, quantile_edges};
use crate::pfn::weights::{LayerWeights, Weights};
use crate::pfn::PfnConfig;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// One in-context task: labelled context rows and unlabelled query rows.
#[derive(Debug, Clone, Copy)]
pub struct TaskView<'a> {
    pub context_x: ArrayView2<'a, f64>,
    pub context_y: ArrayView1<'a, f64>,
    pub query_x: ArrayView2<'a, f64>,
}

impl<'a> TaskView<'a> {
    pub fn n_context(&self) -> usize {
        self.context_x.nrows()
    }
    pub fn n_query(&self) -> usize {
        self.query_x.nrows()
    }
}

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| (v - mean) * rs);
    }
    let mut y = &xhat * g;
    y += b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * g;
    for ((mut row, xhat), &rstd) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut row).and(&xhat).for_each(|v, &xh| {
            *v = rstd * (*v - mean_d - xh * mean_dx);
        });
    }
    dx
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

struct AttnCache {
    z: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per head: weights over context rows (rows × context).
    p: Vec<Array2<f64>>,
    /// Per head: self weight of each query row.
    p_self: Vec<Array1<f64>>,
    /// Concatenated head outputs before the output projection.
    o: Array2<f64>,
}

fn attention(z: Array2<f64>, lw: &LayerWeights, n_ctx: usize, heads: usize) -> AttnCache {
    let n = z.nrows();
    let d = z.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = z.dot(&lw.wq);
    let k = z.dot(&lw.wk);
    let v = z.dot(&lw.wv);
    let mut o = Array2::<f64>::zeros((n, d));
    let mut ps = Vec::with_capacity(heads);
    let mut p_selfs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cs = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cs);
        let kc = k.slice(s![..n_ctx, h * dh..(h + 1) * dh]);
        let vc = v.slice(s![..n_ctx, h * dh..(h + 1) * dh]);
        let mut p = qh.dot(&kc.t());
        p *= scale;
        let mut p_self = Array1::<f64>::zeros(n - n_ctx);
        for (r, mut row) in p.rows_mut().into_iter().enumerate() {
            let self_score = (r >= n_ctx).then(|| qh.row(r).dot(&k.slice(cs).row(r)) * scale);
            let mut max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            if let Some(sv) = self_score {
                max = max.max(sv);
            }
            row.mapv_inplace(|x| (x - max).exp());
            let mut sum = row.sum();
            let e_self = self_score.map(|sv| (sv - max).exp());
            if let Some(es) = e_self {
                sum += es;
            }
            row /= sum;
            if let Some(es) = e_self {
                p_self[r - n_ctx] = es / sum;
            }
        }
        let mut oh = p.dot(&vc);
        for r in n_ctx..n {
            let ps_r = p_self[r - n_ctx];
            oh.row_mut(r).scaled_add(ps_r, &v.slice(cs).row(r));
        }
        o.slice_mut(cs).assign(&oh);
        ps.push(p);
        p_selfs.push(p_self);
    }
    AttnCache { z, q, k, v, p: ps, p_self: p_selfs, o }
}

/// Returns the gradient with respect to the attention input `z`.
fn attention_backward(
    d_o: &Array2<f64>,
    c: &AttnCache,
    lw: &LayerWeights,
    gw: &mut LayerWeights,
    n_ctx: usize,
    heads: usize,
) -> Array2<f64> {
    let n = d_o.nrows();
    let d = d_o.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::<f64>::zeros((n, d));
    let mut dk = Array2::<f64>::zeros((n, d));
    let mut dv = Array2::<f64>::zeros((n, d));
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let cs = s![.., cols.clone()];
        let ctx = s![..n_ctx, cols.clone()];
        let p = &c.p[h];
        let p_self = &c.p_self[h];
        let doh = d_o.slice(cs);
        let vc = c.v.slice(ctx);
        let mut dp = doh.dot(&vc.t());
        let mut dvc = dv.slice_mut(ctx);
        dvc += &p.t().dot(&doh);
        let mut dp_self = Array1::<f64>::zeros(n - n_ctx);
        for r in n_ctx..n {
            dp_self[r - n_ctx] = doh.row(r).dot(&c.v.slice(cs).row(r));
            dv.slice_mut(cs).row_mut(r).scaled_add(p_self[r - n_ctx], &doh.row(r));
        }
        // Softmax backward, in place: dp becomes d(scores).
        let mut ds_self = Array1::<f64>::zeros(n - n_ctx);
        for (r, (mut drow, prow)) in dp.rows_mut().into_iter().zip(p.rows()).enumerate() {
            let mut sdot = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum::<f64>();
            if r >= n_ctx {
                sdot += p_self[r - n_ctx] * dp_self[r - n_ctx];
            }
            Zip::from(&mut drow).and(&prow).for_each(|dv_, &pv| *dv_ = pv * (*dv_ - sdot));
            if r >= n_ctx {
                ds_self[r - n_ctx] = p_self[r - n_ctx] * (dp_self[r - n_ctx] - sdot);
            }
        }
        let ds = dp;
        let qh = c.q.slice(cs);
        let kc = c.k.slice(ctx);
        let mut dqh = dq.slice_mut(cs);
        dqh.scaled_add(scale, &ds.dot(&kc));
        let mut dkc = dk.slice_mut(ctx);
        dkc.scaled_add(scale, &ds.t().dot(&qh));
        for r in n_ctx..n {
            let g = scale * ds_self[r - n_ctx];
            dq.slice_mut(cs).row_mut(r).scaled_add(g, &c.k.slice(cs).row(r));
            dk.slice_mut(cs).row_mut(r).scaled_add(g, &c.q.slice(cs).row(r));
        }
    }
    gw.wq += &c.z.t().dot(&dq);
    gw.wk += &c.z.t().dot(&dk);
    gw.wv += &c.z.t().dot(&dv);
    let mut dz = dq.dot(&lw.wq.t());
    dz += &dk.dot(&lw.wk.t());
    dz += &dv.dot(&lw.wv.t());
    dz
}

struct LayerCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    z2: Array2<f64>,
    u: Array2<f64>,
    gact: Array2<f64>,
}

pub(crate) struct ForwardCache {
    xp: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    zf: Array2<f64>,
}

/// Output of a forward pass.
pub struct Forward {
    /// Final representation of every row (context first).
    pub row_embeddings: Array2<f64>,
    /// Bucket logits of the query rows.
    pub logits: Array2<f64>,
    pub(crate) cache: Option<ForwardCache>,
}

/// Zero-pad features to `max_features`, rescaling so the expected squared norm
/// of a row does not depend on the number of real features.
fn pad_rows(x: ArrayView2<f64>, out: &mut ndarray::ArrayViewMut2<f64>, max_features: usize) {
    let f = x.ncols();
    let scale = (max_features as f64 / f as f64).sqrt();
    out.slice_mut(s![.., ..f]).assign(&(&x * scale));
}

pub(crate) fn forward(w: &Weights, config: &PfnConfig, task: TaskView<'_>, keep_cache: bool) -> Forward {
    let n_ctx = task.n_context();
    let n_q = task.n_query();
    let n = n_ctx + n_q;
    let mut xp = Array2::<f64>::zeros((n, config.max_features));
    pad_rows(task.context_x, &mut xp.slice_mut(s![..n_ctx, ..]), config.max_features);
    pad_rows(task.query_x, &mut xp.slice_mut(s![n_ctx.., ..]), config.max_features);

    let a1 = linear(&xp, &w.enc_w1, &w.enc_b1);
    let h1 = a1.mapv(gelu);
    let mut h = linear(&h1, &w.enc_w2, &w.enc_b2);
    for (i, mut row) in h.rows_mut().into_iter().enumerate() {
        if i < n_ctx {
            row.scaled_add(task.context_y[i], &w.target_w);
            row += &w.target_b;
        } else {
            row += &w.query_token;
        }
    }

    let mut layer_caches = Vec::new();
    for lw in &w.layers {
        let (z1, ln1) = layer_norm(&h, &lw.ln1_g, &lw.ln1_b);
        let attn = attention(z1, lw, n_ctx, config.heads);
        h += &linear(&attn.o, &lw.wo, &lw.bo);
        let (z2, ln2) = layer_norm(&h, &lw.ln2_g, &lw.ln2_b);
        let u = linear(&z2, &lw.ff_w1, &lw.ff_b1);
        let gact = u.mapv(gelu);
        h += &linear(&gact, &lw.ff_w2, &lw.ff_b2);
        if keep_cache {
            layer_caches.push(LayerCache { ln1, attn, ln2, z2, u, gact });
        }
    }
    let (zf, lnf) = layer_norm(&h, &w.lnf_g, &w.lnf_b);
    let logits = linear(&zf.slice(s![n_ctx.., ..]).to_owned(), &w.head_w, &w.head_b);
    let cache = keep_cache.then(|| ForwardCache {
        xp,
        a1,
        h1,
        layers: layer_caches,
        lnf,
        zf: zf.clone(),
    });
    Forward { row_embeddings: zf, logits, cache }
}

/// Row-wise softmax.
pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Bucket targets of the query rows under the context-quantile edges.
pub(crate) fn query_buckets(config: &PfnConfig, task: TaskView<'_>, query_y: ArrayView1<f64>) -> Vec<usize> {
    let edges = quantile_edges(&task.context_y.to_vec(), config.buckets);
    query_y.iter().map(|&y| bucket_index(&edges, y)).collect()
}

/// Mean cross-entropy of the query targets, times `loss_scale`.
pub(crate) fn loss(
    w: &Weights,
    config: &PfnConfig,
    task: TaskView<'_>,
    query_y: ArrayView1<f64>,
    loss_scale: f64,
) -> f64 {
    let fwd = forward(w, config, task, false);
    cross_entropy(&fwd.logits, &query_buckets(config, task, query_y)) * loss_scale
}

fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / targets.len() as f64
}

/// Loss and its gradient with respect to every parameter.
pub(crate) fn loss_and_grad(
    w: &Weights,
    config: &PfnConfig,
    task: TaskView<'_>,
    query_y: ArrayView1<f64>,
    loss_scale: f64,
) -> (f64, Weights) {
    let n_ctx = task.n_context();
    let n_q = task.n_query();
    let n = n_ctx + n_q;
    let heads = config.heads;
    let fwd = forward(w, config, task, true);
    let targets = query_buckets(config, task, query_y);
    let loss = cross_entropy(&fwd.logits, &targets) * loss_scale;
    let cache = fwd.cache.expect("cache requested");
    let mut g = Weights::zeros(config);

    let mut dlogits = softmax_rows(&fwd.logits);
    for (mut row, &t) in dlogits.rows_mut().into_iter().zip(&targets) {
        row[t] -= 1.0;
    }
    dlogits *= loss_scale / n_q as f64;

    let zf_q = cache.zf.slice(s![n_ctx.., ..]);
    g.head_w += &zf_q.t().dot(&dlogits);
    g.head_b += &dlogits.sum_axis(Axis(0));
    let mut dzf = Array2::<f64>::zeros((n, config.d_model));
    dzf.slice_mut(s![n_ctx.., ..]).assign(&dlogits.dot(&w.head_w.t()));
    let mut dh = layer_norm_backward(&dzf, &cache.lnf, &w.lnf_g, &mut g.lnf_g, &mut g.lnf_b);

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lw = &w.layers[l];
        let gw = &mut g.layers[l];
        // Feed-forward block.
        gw.ff_w2 += &lc.gact.t().dot(&dh);
        gw.ff_b2 += &dh.sum_axis(Axis(0));
        let mut du = dh.dot(&lw.ff_w2.t());
        Zip::from(&mut du).and(&lc.u).for_each(|d, &u| *d *= gelu_grad(u));
        gw.ff_w1 += &lc.z2.t().dot(&du);
        gw.ff_b1 += &du.sum_axis(Axis(0));
        let dz2 = du.dot(&lw.ff_w1.t());
        dh += &layer_norm_backward(&dz2, &lc.ln2, &lw.ln2_g, &mut gw.ln2_g, &mut gw.ln2_b);
        // Attention block.
        gw.wo += &lc.attn.o.t().dot(&dh);
        gw.bo += &dh.sum_axis(Axis(0));
        let d_o = dh.dot(&lw.wo.t());
        let dz1 = attention_backward(&d_o, &lc.attn, lw, gw, n_ctx, heads);
        dh += &layer_norm_backward(&dz1, &lc.ln1, &lw.ln1_g, &mut gw.ln1_g, &mut gw.ln1_b);
    }

    // Row tokens.
    for i in 0..n {
        let row = dh.row(i);
        if i < n_ctx {
            g.target_w.scaled_add(task.context_y[i], &row);
            g.target_b += &row;
        } else {
            g.query_token += &row;
        }
    }
    // Encoder.
    g.enc_w2 += &cache.h1.t().dot(&dh);
    g.enc_b2 += &dh.sum_axis(Axis(0));
    let mut da1 = dh.dot(&w.enc_w2.t());
    Zip::from(&mut da1).and(&cache.a1).for_each(|d, &a| *d *= gelu_grad(a));
    g.enc_w1 += &cache.xp.t().dot(&da1);
    g.enc_b1 += &da1.sum_axis(Axis(0));
    (loss, g)
}
