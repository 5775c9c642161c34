//! Model configuration, flat parameter layout and initialization.

use std::ops::Range;

use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which towers feed the head. A disabled tower is never evaluated and its
/// parameters receive zero gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Towers {
    #[default]
    Both,
    TimeOnly,
    FrequencyOnly,
}

impl Towers {
    pub fn time(self) -> bool {
        self != Towers::FrequencyOnly
    }

    pub fn frequency(self) -> bool {
        self != Towers::TimeOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Samples per window (L); must be a power of two.
    pub window_len: usize,
    /// Channels per window (d).
    pub channels: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub attention_blocks: usize,
    pub ffn_dim: usize,
    pub classes: usize,
    pub dropout: f64,
    /// Filters of the temporal convolution ahead of the spatial one.
    pub temporal_filters: usize,
    pub kernel_len: usize,
    pub towers: Towers,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: 128,
            channels: 64,
            embed_dim: 32,
            heads: 4,
            attention_blocks: 1,
            ffn_dim: 64,
            classes: 2,
            dropout: 0.1,
            temporal_filters: 128,
            kernel_len: 8,
            towers: Towers::Both,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("model config: {msg}")));
        if self.window_len < 2 || !self.window_len.is_power_of_two() {
            return fail(format!(
                "window_len must be a power of two ≥ 2, got {}",
                self.window_len
            ));
        }
        if self.channels == 0 || self.embed_dim == 0 || self.ffn_dim == 0 {
            return fail("channels, embed_dim and ffn_dim must be positive".into());
        }
        if self.temporal_filters == 0 || self.kernel_len == 0 {
            return fail("temporal_filters and kernel_len must be positive".into());
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.classes < 2 {
            return fail(format!("classes must be ≥ 2, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Sequence length seen by the frequency tower.
    pub fn freq_len(&self) -> usize {
        self.window_len / 2 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    Sinusoid,
}

/// A named `[rows × cols]` block inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, v: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &v[self.range()]).expect("slot shape")
    }

    pub fn vec<'a>(&self, v: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&v[self.range()])
    }

    pub fn add<'a>(&self, grad: &mut [f64], delta: impl IntoIterator<Item = &'a f64>) {
        for (g, d) in grad[self.range()].iter_mut().zip(delta) {
            *g += d;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BlockSlots {
    pub wq: Slot,
    pub wk: Slot,
    pub wv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub rel: Slot,
    pub ln1_g: Slot,
    pub ln1_b: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
    pub ln2_g: Slot,
    pub ln2_b: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TowerSlots {
    pub seq_len: usize,
    pub temporal: Slot,
    pub spatial: Slot,
    pub spatial_b: Slot,
    pub ln0_g: Slot,
    pub ln0_b: Slot,
    pub pos: Slot,
    pub blocks: Vec<BlockSlots>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub time: TowerSlots,
    pub freq: TowerSlots,
    pub head_w: Slot,
    pub head_b: Slot,
    pub named: Vec<(String, Slot, Init)>,
    pub total: usize,
}

struct Builder {
    named: Vec<(String, Slot, Init)>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> Slot {
        let slot = Slot {
            offset: self.total,
            rows,
            cols,
        };
        self.total += slot.len();
        self.named.push((name, slot.clone(), init));
        slot
    }

    fn xavier(&mut self, name: String, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Slot {
        self.add(name, rows, cols, Init::Xavier { fan_in, fan_out })
    }

    fn tower(&mut self, prefix: &str, seq_len: usize, cfg: &ModelConfig) -> TowerSlots {
        let (e, f, k, d) = (cfg.embed_dim, cfg.temporal_filters, cfg.kernel_len, cfg.channels);
        let p = |s: &str| format!("{prefix}.{s}");
        let temporal = self.xavier(p("temporal_conv"), f, k, k, f * k);
        let spatial = self.xavier(p("spatial_conv"), e, f * d, f * d, e * d);
        let spatial_b = self.add(p("spatial_conv.bias"), 1, e, Init::Zeros);
        let ln0_g = self.add(p("conv_norm.gamma"), 1, e, Init::Ones);
        let ln0_b = self.add(p("conv_norm.beta"), 1, e, Init::Zeros);
        let pos = self.add(p("abs_position"), seq_len, e, Init::Sinusoid);
        let blocks = (0..cfg.attention_blocks)
            .map(|b| {
                let q = |s: &str| format!("{prefix}.block{b}.{s}");
                let h = cfg.ffn_dim;
                BlockSlots {
                    wq: self.xavier(q("query"), e, e, e, e),
                    wk: self.xavier(q("key"), e, e, e, e),
                    wv: self.xavier(q("value"), e, e, e, e),
                    wo: self.xavier(q("out"), e, e, e, e),
                    bo: self.add(q("out.bias"), 1, e, Init::Zeros),
                    rel: self.add(q("rel_bias"), cfg.heads, 2 * seq_len - 1, Init::Zeros),
                    ln1_g: self.add(q("attn_norm.gamma"), 1, e, Init::Ones),
                    ln1_b: self.add(q("attn_norm.beta"), 1, e, Init::Zeros),
                    w1: self.xavier(q("ffn1"), e, h, e, h),
                    b1: self.add(q("ffn1.bias"), 1, h, Init::Zeros),
                    w2: self.xavier(q("ffn2"), h, e, h, e),
                    b2: self.add(q("ffn2.bias"), 1, e, Init::Zeros),
                    ln2_g: self.add(q("ffn_norm.gamma"), 1, e, Init::Ones),
                    ln2_b: self.add(q("ffn_norm.beta"), 1, e, Init::Zeros),
                }
            })
            .collect();
        TowerSlots {
            seq_len,
            temporal,
            spatial,
            spatial_b,
            ln0_g,
            ln0_b,
            pos,
            blocks,
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut b = Builder {
            named: Vec::new(),
            total: 0,
        };
        let time = b.tower("time", cfg.window_len, cfg);
        let freq = b.tower("freq", cfg.freq_len(), cfg);
        let e2 = 2 * cfg.embed_dim;
        let head_w = b.xavier("head".into(), e2, cfg.classes, e2, cfg.classes);
        let head_b = b.add("head.bias".into(), 1, cfg.classes, Init::Zeros);
        Layout {
            time,
            freq,
            head_w,
            head_b,
            named: b.named,
            total: b.total,
        }
    }
}

/// All trainable tensors in one flat vector. Gradients use the same type.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    values: Vec<f64>,
    pub(crate) layout: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl ModelParams {
    pub fn from_flat(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if values.len() != layout.total {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", layout.total),
                got: format!("{} parameters", values.len()),
            });
        }
        Ok(Self { config, values, layout })
    }

    pub(crate) fn zeros_like(other: &ModelParams) -> Self {
        Self {
            config: other.config.clone(),
            values: vec![0.0; other.values.len()],
            layout: other.layout.clone(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(name, [rows, cols], values)` for every tensor, in storage order.
    pub fn blocks(&self) -> impl Iterator<Item = (&str, [usize; 2], &[f64])> {
        self.layout
            .named
            .iter()
            .map(|(n, s, _)| (n.as_str(), [s.rows, s.cols], &self.values[s.range()]))
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks().find(|(n, _, _)| *n == name).map(|(_, _, v)| v)
    }

    /// SHA-256 over the little-endian parameter bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite_block(&self) -> Option<&str> {
        self.blocks()
            .find(|(_, _, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(n, _, _)| n)
    }
}

/// Deterministic initialization: Xavier-uniform weights, zero biases, unit
/// norm gains, sinusoidal absolute positions and zero relative biases.
pub fn init(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (_, slot, kind) in &layout.named {
        let dst = &mut values[slot.range()];
        match *kind {
            Init::Xavier { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in dst.iter_mut() {
                    *v = rng.random_range(-a..a);
                }
            }
            Init::Zeros => {}
            Init::Ones => dst.fill(1.0),
            Init::Sinusoid => sinusoid(dst, slot.rows, slot.cols),
        }
    }
    ModelParams::from_flat(config.clone(), values)
}

/// Sine/cosine position table with frequencies stretched by `dim / seq_len`
/// so short sequences still get distinguishable codes.
fn sinusoid(dst: &mut [f64], seq_len: usize, dim: usize) {
    let stretch = dim as f64 / seq_len as f64;
    for t in 0..seq_len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let freq = 10000f64.powf(-2.0 * pair / dim as f64);
            let angle = t as f64 * freq * stretch;
            dst[t * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
}
