//! Forward pass and hand-derived backward pass of the two-tower network.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{BlockSlots, ModelConfig, ModelParams, TowerSlots};
use crate::error::{Error, Result};
use crate::spectral::{SpectrumPlan, Taper};

const LN_EPS: f64 = 1e-5;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gamma: ArrayView1<f64>, beta: ArrayView1<f64>) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let s = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * s);
        *is = s;
    }
    let y = &xhat * &gamma + beta;
    (y, NormCache { xhat, inv_std })
}

/// Returns `dx`; accumulates gain and shift gradients.
fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: ArrayView1<f64>,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_beta += &dy.sum_axis(Axis(0));
    let dxhat = dy * &gamma;
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, dh), xh), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let m1 = dh.sum() / n;
        let m2 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((o, &a), &b) in out.iter_mut().zip(dh.iter()).zip(xh.iter()) {
            *o = s * (a - m1 - b * m2);
        }
    }
    dx
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Inverted dropout mask, or `None` when dropout is inactive.
fn dropout_mask(shape: (usize, usize), p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array2<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

/// Lays out `[S × d]` as `[S × (d·K)]` so the fused convolution is one product.
fn im2col(x: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let (len, d) = x.dim();
    let pad = (k - 1) / 2;
    let mut col = Array2::zeros((len, d * k));
    for t in 0..len {
        for j in 0..k {
            let src = t + j;
            if src < pad || src - pad >= len {
                continue;
            }
            let row = x.row(src - pad);
            for c in 0..d {
                col[[t, c * k + j]] = row[c];
            }
        }
    }
    col
}

/// Gradient accumulator with ndarray views over slots of a flat vector.
struct Grad<'a> {
    g: &'a mut [f64],
}

impl Grad<'_> {
    fn add(&mut self, slot: &super::params::Slot, delta: &Array2<f64>) {
        slot.add(self.g, delta.iter());
    }

    fn add1(&mut self, slot: &super::params::Slot, delta: &Array1<f64>) {
        slot.add(self.g, delta.iter());
    }
}

/// Per-batch constants of one tower: the temporal and spatial kernels folded
/// into a single `[(d·K) × E]` convolution kernel.
pub(crate) struct PreparedTower<'a> {
    slots: &'a TowerSlots,
    v: &'a [f64],
    fused: Array2<f64>,
    d_fused: Array2<f64>,
    cfg: &'a ModelConfig,
}

impl<'a> PreparedTower<'a> {
    fn new(slots: &'a TowerSlots, v: &'a [f64], cfg: &'a ModelConfig) -> Self {
        let (e, f, k, d) = (cfg.embed_dim, cfg.temporal_filters, cfg.kernel_len, cfg.channels);
        let wt = slots.temporal.mat(v);
        let ws = slots.spatial.mat(v);
        let mut fused = Array2::zeros((d * k, e));
        for ei in 0..e {
            for c in 0..d {
                for fi in 0..f {
                    let w = ws[[ei, fi * d + c]];
                    for j in 0..k {
                        fused[[c * k + j, ei]] += w * wt[[fi, j]];
                    }
                }
            }
        }
        Self {
            slots,
            v,
            d_fused: Array2::zeros(fused.raw_dim()),
            fused,
            cfg,
        }
    }

    /// Pushes the accumulated fused-kernel gradient back to both kernels.
    fn finish(self, grad: &mut [f64]) {
        let (e, f, k, d) = (
            self.cfg.embed_dim,
            self.cfg.temporal_filters,
            self.cfg.kernel_len,
            self.cfg.channels,
        );
        let wt = self.slots.temporal.mat(self.v);
        let ws = self.slots.spatial.mat(self.v);
        let mut d_wt = Array2::<f64>::zeros((f, k));
        let mut d_ws = Array2::<f64>::zeros((e, f * d));
        for ei in 0..e {
            for c in 0..d {
                for fi in 0..f {
                    let w = ws[[ei, fi * d + c]];
                    let mut acc = 0.0;
                    for j in 0..k {
                        let g = self.d_fused[[c * k + j, ei]];
                        acc += g * wt[[fi, j]];
                        d_wt[[fi, j]] += g * w;
                    }
                    d_ws[[ei, fi * d + c]] += acc;
                }
            }
        }
        let mut g = Grad { g: grad };
        g.add(&self.slots.temporal, &d_wt);
        g.add(&self.slots.spatial, &d_ws);
    }
}

struct BlockCache {
    h: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    norm1: NormCache,
    a: Array2<f64>,
    z1: Array2<f64>,
    g1: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
    norm2: NormCache,
}

pub(crate) struct TowerCache {
    col: Array2<f64>,
    norm0: NormCache,
    pre_act: Array2<f64>,
    blocks: Vec<BlockCache>,
    seq_len: usize,
}

fn block_forward(
    h: Array2<f64>,
    b: &BlockSlots,
    v: &[f64],
    cfg: &ModelConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, BlockCache) {
    let seq = h.nrows();
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = h.dot(&b.wq.mat(v));
    let k = h.dot(&b.wk.mat(v));
    let val = h.dot(&b.wv.mat(v));
    let rel = b.rel.mat(v);
    let mut o = Array2::zeros(h.raw_dim());
    let mut probs = Vec::with_capacity(cfg.heads);
    for head in 0..cfg.heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let r = rel.row(head);
        for ((i, j), x) in sc.indexed_iter_mut() {
            *x += r[j + seq - 1 - i];
        }
        softmax_rows(&mut sc);
        o.slice_mut(cols).assign(&sc.dot(&val.slice(cols)));
        probs.push(sc);
    }
    let mut attn = o.dot(&b.wo.mat(v)) + b.bo.vec(v);
    let attn_mask = dropout_mask(attn.dim(), cfg.dropout, rng.as_deref_mut());
    if let Some(m) = &attn_mask {
        attn *= m;
    }
    let (a, norm1) = layer_norm(&(&h + &attn), b.ln1_g.vec(v), b.ln1_b.vec(v));
    let z1 = a.dot(&b.w1.mat(v)) + b.b1.vec(v);
    let g1 = z1.mapv(gelu);
    let mut f = g1.dot(&b.w2.mat(v)) + b.b2.vec(v);
    let ffn_mask = dropout_mask(f.dim(), cfg.dropout, rng);
    if let Some(m) = &ffn_mask {
        f *= m;
    }
    let (out, norm2) = layer_norm(&(&a + &f), b.ln2_g.vec(v), b.ln2_b.vec(v));
    let cache = BlockCache {
        h,
        q,
        k,
        v: val,
        probs,
        o,
        attn_mask,
        norm1,
        a,
        z1,
        g1,
        ffn_mask,
        norm2,
    };
    (out, cache)
}

fn block_backward(
    d_out: &Array2<f64>,
    c: &BlockCache,
    b: &BlockSlots,
    v: &[f64],
    cfg: &ModelConfig,
    grad: &mut Grad,
) -> Array2<f64> {
    let e = cfg.embed_dim;
    let seq = d_out.nrows();
    let mut dg = Array1::zeros(e);
    let mut db = Array1::zeros(e);
    let dx2 = layer_norm_back(d_out, &c.norm2, b.ln2_g.vec(v), &mut dg, &mut db);
    grad.add1(&b.ln2_g, &dg);
    grad.add1(&b.ln2_b, &db);

    let mut df = dx2.clone();
    if let Some(m) = &c.ffn_mask {
        df *= m;
    }
    grad.add1(&b.b2, &df.sum_axis(Axis(0)));
    grad.add(&b.w2, &c.g1.t().dot(&df));
    let mut dz1 = df.dot(&b.w2.mat(v).t());
    dz1.zip_mut_with(&c.z1, |d, &z| *d *= gelu_grad(z));
    grad.add1(&b.b1, &dz1.sum_axis(Axis(0)));
    grad.add(&b.w1, &c.a.t().dot(&dz1));
    let da = dx2 + dz1.dot(&b.w1.mat(v).t());

    let mut dg = Array1::zeros(e);
    let mut db = Array1::zeros(e);
    let dx1 = layer_norm_back(&da, &c.norm1, b.ln1_g.vec(v), &mut dg, &mut db);
    grad.add1(&b.ln1_g, &dg);
    grad.add1(&b.ln1_b, &db);

    let mut dattn = dx1.clone();
    if let Some(m) = &c.attn_mask {
        dattn *= m;
    }
    grad.add1(&b.bo, &dattn.sum_axis(Axis(0)));
    grad.add(&b.wo, &c.o.t().dot(&dattn));
    let d_o = dattn.dot(&b.wo.mat(v).t());

    let dh_dim = cfg.head_dim();
    let scale = 1.0 / (dh_dim as f64).sqrt();
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    let mut d_rel = Array2::zeros((cfg.heads, 2 * seq - 1));
    for head in 0..cfg.heads {
        let cols = s![.., head * dh_dim..(head + 1) * dh_dim];
        let p = &c.probs[head];
        let doh = d_o.slice(cols);
        let mut ds = doh.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&doh));
        for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
            let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
            drow.zip_mut_with(&prow, |d, &pv| *d = pv * (*d - dot));
        }
        let mut r = d_rel.row_mut(head);
        for ((i, j), &x) in ds.indexed_iter() {
            r[j + seq - 1 - i] += x;
        }
        dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
        dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
    }
    grad.add(&b.rel, &d_rel);
    grad.add(&b.wq, &c.h.t().dot(&dq));
    grad.add(&b.wk, &c.h.t().dot(&dk));
    grad.add(&b.wv, &c.h.t().dot(&dv));
    dx1 + dq.dot(&b.wq.mat(v).t()) + dk.dot(&b.wk.mat(v).t()) + dv.dot(&b.wv.mat(v).t())
}

fn tower_forward(x: ArrayView2<f64>, t: &PreparedTower, mut rng: Option<&mut ChaCha8Rng>) -> (Array1<f64>, TowerCache) {
    let (slots, v, cfg) = (t.slots, t.v, t.cfg);
    let col = im2col(x, cfg.kernel_len);
    let u = col.dot(&t.fused) + slots.spatial_b.vec(v);
    let (pre_act, norm0) = layer_norm(&u, slots.ln0_g.vec(v), slots.ln0_b.vec(v));
    let mut h = pre_act.mapv(gelu) + slots.pos.mat(v);
    let mut blocks = Vec::with_capacity(slots.blocks.len());
    for b in &slots.blocks {
        let (next, cache) = block_forward(h, b, v, cfg, rng.as_deref_mut());
        blocks.push(cache);
        h = next;
    }
    let pooled = h.mean_axis(Axis(0)).expect("non-empty sequence");
    let cache = TowerCache {
        col,
        norm0,
        pre_act,
        blocks,
        seq_len: x.nrows(),
    };
    (pooled, cache)
}

fn tower_backward(d_pooled: ArrayView1<f64>, c: &TowerCache, t: &mut PreparedTower, grad: &mut [f64]) {
    let (slots, v, cfg) = (t.slots, t.v, t.cfg);
    let mut g = Grad { g: grad };
    let scale = 1.0 / c.seq_len as f64;
    let mut dh = Array2::from_shape_fn((c.seq_len, cfg.embed_dim), |(_, j)| d_pooled[j] * scale);
    for (b, cache) in slots.blocks.iter().zip(&c.blocks).rev() {
        dh = block_backward(&dh, cache, b, v, cfg, &mut g);
    }
    g.add(&slots.pos, &dh);
    dh.zip_mut_with(&c.pre_act, |d, &z| *d *= gelu_grad(z));
    let mut dg = Array1::zeros(cfg.embed_dim);
    let mut db = Array1::zeros(cfg.embed_dim);
    let du = layer_norm_back(&dh, &c.norm0, slots.ln0_g.vec(v), &mut dg, &mut db);
    g.add1(&slots.ln0_g, &dg);
    g.add1(&slots.ln0_b, &db);
    g.add1(&slots.spatial_b, &du.sum_axis(Axis(0)));
    t.d_fused += &c.col.t().dot(&du);
}

/// Log-compressed magnitude spectrum `[L/2+1 × d]` fed to the frequency tower.
pub(crate) fn frequency_input(plan: &SpectrumPlan, window: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(plan.magnitudes(window)?.mapv(f64::ln_1p))
}

pub(crate) struct Sample {
    time: Option<(Array1<f64>, TowerCache)>,
    freq: Option<(Array1<f64>, TowerCache)>,
    pub logits: Array1<f64>,
}

/// Whole-batch evaluation state; keeps the folded convolution kernels.
pub(crate) struct Network<'a> {
    params: &'a ModelParams,
    time: PreparedTower<'a>,
    freq: PreparedTower<'a>,
    plan: SpectrumPlan,
}

impl<'a> Network<'a> {
    pub fn new(params: &'a ModelParams) -> Result<Self> {
        let cfg = params.config();
        let v = params.values();
        Ok(Self {
            params,
            time: PreparedTower::new(&params.layout.time, v, cfg),
            freq: PreparedTower::new(&params.layout.freq, v, cfg),
            plan: SpectrumPlan::new(cfg.window_len, Taper::None)?,
        })
    }

    pub fn check_shape(&self, window: &Array2<f64>) -> Result<()> {
        let cfg = self.params.config();
        if window.dim() != (cfg.window_len, cfg.channels) {
            return Err(Error::ShapeMismatch {
                expected: format!("{} × {} window", cfg.window_len, cfg.channels),
                got: format!("{} × {} window", window.nrows(), window.ncols()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, window: &Array2<f64>, mut rng: Option<&mut ChaCha8Rng>) -> Result<Sample> {
        self.check_shape(window)?;
        let cfg = self.params.config();
        let v = self.params.values();
        let time = cfg
            .towers
            .time()
            .then(|| tower_forward(window.view(), &self.time, rng.as_deref_mut()));
        let freq = if cfg.towers.frequency() {
            let spec = frequency_input(&self.plan, window)?;
            Some(tower_forward(spec.view(), &self.freq, rng))
        } else {
            None
        };
        let e = cfg.embed_dim;
        let mut joined = Array1::zeros(2 * e);
        if let Some((p, _)) = &time {
            joined.slice_mut(s![..e]).assign(p);
        }
        if let Some((p, _)) = &freq {
            joined.slice_mut(s![e..]).assign(p);
        }
        let layout = &self.params.layout;
        let logits = joined.dot(&layout.head_w.mat(v)) + layout.head_b.vec(v);
        Ok(Sample { time, freq, logits })
    }

    /// Accumulates the gradient of `d_logits · logits` for one sample.
    pub fn backward(&mut self, sample: &Sample, d_logits: &Array1<f64>, grad: &mut [f64]) {
        let v = self.params.values();
        let e = self.params.config().embed_dim;
        let layout = &self.params.layout;
        let mut joined = Array1::zeros(2 * e);
        if let Some((p, _)) = &sample.time {
            joined.slice_mut(s![..e]).assign(p);
        }
        if let Some((p, _)) = &sample.freq {
            joined.slice_mut(s![e..]).assign(p);
        }
        let dw = joined
            .view()
            .insert_axis(Axis(1))
            .dot(&d_logits.view().insert_axis(Axis(0)));
        layout.head_w.add(grad, dw.iter());
        layout.head_b.add(grad, d_logits.iter());
        let d_joined = layout.head_w.mat(v).dot(d_logits);
        if let Some((_, cache)) = &sample.time {
            tower_backward(d_joined.slice(s![..e]), cache, &mut self.time, grad);
        }
        if let Some((_, cache)) = &sample.freq {
            tower_backward(d_joined.slice(s![e..]), cache, &mut self.freq, grad);
        }
    }

    /// Folds the accumulated convolution gradients into `grad`.
    pub fn finish(self, grad: &mut [f64]) {
        let towers = self.params.config().towers;
        if towers.time() {
            self.time.finish(grad);
        }
        if towers.frequency() {
            self.freq.finish(grad);
        }
    }
}

/// Attention probabilities `[heads][S × S]` of every block of the time tower,
/// computed in inference mode.
pub fn attention_maps(params: &ModelParams, window: &Array2<f64>) -> Result<Vec<Vec<Array2<f64>>>> {
    let net = Network::new(params)?;
    net.check_shape(window)?;
    let (_, cache) = tower_forward(window.view(), &net.time, None);
    Ok(cache.blocks.into_iter().map(|b| b.probs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn im2col_same_padding() {
        let x = Array2::from_shape_fn((5, 1), |(t, _)| t as f64 + 1.0);
        let col = im2col(x.view(), 4);
        // Kernel of length 4 looks one sample back and two ahead.
        assert_eq!(col.row(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(col.row(4).to_vec(), vec![4.0, 5.0, 0.0, 0.0]);
    }
}
