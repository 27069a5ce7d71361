//! Small pre-norm transformer encoder producing the token feature sequence
//! consumed by the heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{BBox, TokenSequence};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

/// Large negative logit used to remove padded keys from attention.
const ATTN_MASK: f64 = -1e12;
const DEFAULT_PAGE: f64 = 1000.0;

fn default_hidden() -> usize {
    128
}
fn default_layers() -> usize {
    4
}
fn default_heads() -> usize {
    4
}
fn default_max_len() -> usize {
    512
}
fn default_true() -> bool {
    true
}
fn default_buckets() -> usize {
    32
}
fn default_std() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub attn_heads: usize,
    /// Feed-forward width; `None` means `4 * hidden_size`.
    #[serde(default)]
    pub ffn_size: Option<usize>,
    #[serde(default = "default_max_len")]
    pub max_seq_len: usize,
    #[serde(default = "default_true")]
    pub use_layout: bool,
    #[serde(default = "default_buckets")]
    pub layout_buckets: usize,
    /// Standard deviation of the normal initializer.
    #[serde(default = "default_std")]
    pub init_std: f64,
    /// Start every block's output projections at zero so the encoder is the
    /// identity on its embeddings at initialization.
    #[serde(default = "default_true")]
    pub zero_init_output: bool,
    /// Add a learned embedding of whether each token opens and/or closes
    /// its text node.
    #[serde(default = "default_true")]
    pub use_segment_flags: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_size: default_hidden(),
            layers: default_layers(),
            attn_heads: default_heads(),
            ffn_size: None,
            max_seq_len: default_max_len(),
            use_layout: true,
            layout_buckets: default_buckets(),
            init_std: default_std(),
            zero_init_output: true,
            use_segment_flags: true,
        }
    }
}

const LAYOUT_AXES: [&str; 4] = ["x0", "y0", "x1", "y1"];

impl EncoderConfig {
    pub fn ffn(&self) -> usize {
        self.ffn_size.unwrap_or(4 * self.hidden_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.attn_heads == 0 || self.hidden_size % self.attn_heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} not divisible by {} attention heads",
                self.hidden_size, self.attn_heads
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be >= 1".into()));
        }
        if self.use_layout && self.layout_buckets == 0 {
            return Err(Error::Config("layout_buckets must be >= 1".into()));
        }
        Ok(())
    }

    /// Registers all encoder parameters in `store`.
    pub fn init_params<T: Scalar>(
        &self,
        vocab_size: usize,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<()> {
        self.validate()?;
        let h = self.hidden_size;
        let std = self.init_std;
        let out_std = if self.zero_init_output { 0.0 } else { std };
        store.insert_normal("enc.tok_emb", &[vocab_size, h], std, rng)?;
        store.insert_normal("enc.pos_emb", &[self.max_seq_len, h], std, rng)?;
        if self.use_layout {
            for axis in LAYOUT_AXES {
                store.insert_normal(format!("enc.layout.{axis}"), &[self.layout_buckets, h], std, rng)?;
            }
        }
        for l in 0..self.layers {
            let p = format!("enc.l{l}");
            store.insert_filled(format!("{p}.ln1.g"), &[h], T::one())?;
            store.insert_zeros(format!("{p}.ln1.b"), &[h])?;
            for m in ["q", "k", "v"] {
                store.insert_normal(format!("{p}.attn.w{m}"), &[h, h], std, rng)?;
                store.insert_zeros(format!("{p}.attn.b{m}"), &[h])?;
            }
            store.insert_normal(format!("{p}.attn.wo"), &[h, h], out_std, rng)?;
            store.insert_zeros(format!("{p}.attn.bo"), &[h])?;
            store.insert_filled(format!("{p}.ln2.g"), &[h], T::one())?;
            store.insert_zeros(format!("{p}.ln2.b"), &[h])?;
            store.insert_normal(format!("{p}.ffn.w1"), &[h, self.ffn()], std, rng)?;
            store.insert_zeros(format!("{p}.ffn.b1"), &[self.ffn()])?;
            store.insert_normal(format!("{p}.ffn.w2"), &[self.ffn(), h], out_std, rng)?;
            store.insert_zeros(format!("{p}.ffn.b2"), &[h])?;
        }
        if self.use_segment_flags {
            store.insert_normal("enc.segment", &[4, h], std, rng)?;
        }
        Ok(())
    }
}

/// Encoder input: a token sequence with optional per-token boxes.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub seq: &'a TokenSequence,
    /// One entry per token (missing entries and padding use bucket 0).
    pub boxes: Option<&'a [Option<BBox>]>,
    pub page_size: Option<(u32, u32)>,
}

fn bucket(coord: i64, extent: f64, buckets: usize) -> usize {
    let b = (coord as f64 / extent * buckets as f64).floor();
    b.clamp(0.0, (buckets - 1) as f64) as usize
}

/// Per-token index into the segment table: `2·opens + closes`, where a
/// token opens (closes) its node if the previous (next) real token belongs
/// to another node. Padding maps to 0.
pub fn segment_flags(seq: &TokenSequence) -> Vec<usize> {
    let n = seq.len();
    let node = &seq.node_of_token;
    let keep = &seq.attention_keep;
    (0..n)
        .map(|i| {
            if !keep[i] {
                return 0;
            }
            let opens = i == 0 || !keep[i - 1] || node[i - 1] != node[i];
            let closes = i + 1 == n || !keep[i + 1] || node[i + 1] != node[i];
            2 * opens as usize + closes as usize
        })
        .collect()
}

fn linear<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, w: &str, b: &str) -> Result<Var> {
    let w = g.param(store, w)?;
    let b = g.param(store, b)?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

fn layer_norm<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, prefix: &str) -> Result<Var> {
    let gamma = g.param(store, &format!("{prefix}.g"))?;
    let beta = g.param(store, &format!("{prefix}.b"))?;
    g.layer_norm(x, gamma, beta)
}

/// Records the encoder forward pass and returns the `L×H` feature node.
///
/// Sum of token, learned 1D position and (optionally) bucketed box and
/// segment-flag embeddings, followed by `layers` pre-norm self-attention blocks. Keys at
/// padding positions are masked out of every attention row.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    input: EncoderInput<'_>,
    cfg: &EncoderConfig,
    store: &ParamStore<T>,
) -> Result<Var> {
    let seq = input.seq;
    let len = seq.len();
    if len > cfg.max_seq_len {
        return Err(Error::Config(format!(
            "sequence of {len} tokens exceeds max_seq_len {}",
            cfg.max_seq_len
        )));
    }
    let tok = g.param(store, "enc.tok_emb")?;
    let mut x = g.embedding(tok, &seq.token_ids)?;
    let pos = g.param(store, "enc.pos_emb")?;
    let positions: Vec<usize> = (0..len).collect();
    let pe = g.embedding(pos, &positions)?;
    x = g.add(x, pe)?;

    if cfg.use_layout {
        let (w, h) = input
            .page_size
            .map_or((DEFAULT_PAGE, DEFAULT_PAGE), |(w, h)| (w.max(1) as f64, h.max(1) as f64));
        for (axis_idx, axis) in LAYOUT_AXES.iter().enumerate() {
            let ids: Vec<usize> = (0..len)
                .map(|i| {
                    let bx = input
                        .boxes
                        .and_then(|b| b.get(i).copied().flatten())
                        .filter(|_| seq.attention_keep[i]);
                    match bx {
                        None => 0,
                        Some(b) => {
                            let c = <[i64; 4]>::from(b)[axis_idx];
                            let extent = if axis_idx % 2 == 0 { w } else { h };
                            bucket(c, extent, cfg.layout_buckets)
                        }
                    }
                })
                .collect();
            let table = g.param(store, &format!("enc.layout.{axis}"))?;
            let e = g.embedding(table, &ids)?;
            x = g.add(x, e)?;
        }
    }

    if cfg.use_segment_flags {
        let ids = segment_flags(seq);
        let table = g.param(store, "enc.segment")?;
        let e = g.embedding(table, &ids)?;
        x = g.add(x, e)?;
    }

    let key_mask: Option<Vec<bool>> = if seq.attention_keep.iter().all(|k| *k) {
        None
    } else {
        Some(
            (0..len * len)
                .map(|c| !seq.attention_keep[c % len])
                .collect(),
        )
    };
    let heads = cfg.attn_heads;
    let head_dim = cfg.hidden_size / heads;
    let scale = T::of(1.0 / (head_dim as f64).sqrt());

    for l in 0..cfg.layers {
        let p = format!("enc.l{l}");
        let xn = layer_norm(g, store, x, &format!("{p}.ln1"))?;
        let q = linear(g, store, xn, &format!("{p}.attn.wq"), &format!("{p}.attn.bq"))?;
        let k = linear(g, store, xn, &format!("{p}.attn.wk"), &format!("{p}.attn.bk"))?;
        let v = linear(g, store, xn, &format!("{p}.attn.wv"), &format!("{p}.attn.bv"))?;
        let mut ctx = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (a, b) = (hd * head_dim, (hd + 1) * head_dim);
            let qh = g.slice_cols(q, a, b)?;
            let kh = g.slice_cols(k, a, b)?;
            let vh = g.slice_cols(v, a, b)?;
            let mut sc = g.matmul_bt(qh, kh)?;
            sc = g.scale(sc, scale)?;
            if let Some(mask) = &key_mask {
                sc = g.masked_fill(sc, mask, T::of(ATTN_MASK))?;
            }
            let attn = g.softmax_rows(sc)?;
            ctx.push(g.matmul(attn, vh)?);
        }
        let ctx = if heads == 1 { ctx[0] } else { g.concat_cols(&ctx)? };
        let out = linear(g, store, ctx, &format!("{p}.attn.wo"), &format!("{p}.attn.bo"))?;
        x = g.add(x, out)?;

        let xn = layer_norm(g, store, x, &format!("{p}.ln2"))?;
        let f = linear(g, store, xn, &format!("{p}.ffn.w1"), &format!("{p}.ffn.b1"))?;
        let f = g.gelu(f)?;
        let f = linear(g, store, f, &format!("{p}.ffn.w2"), &format!("{p}.ffn.b2"))?;
        x = g.add(x, f)?;
    }
    Ok(x)
}

/// Forward pass only, returning `h` as a tensor.
pub fn encode_tensor<T: Scalar>(
    input: EncoderInput<'_>,
    cfg: &EncoderConfig,
    store: &ParamStore<T>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let h = encode(&mut g, input, cfg, store)?;
    Ok(g.value(h).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            hidden_size: 8,
            layers: 2,
            attn_heads: 2,
            ffn_size: Some(16),
            max_seq_len: 10,
            use_layout: true,
            layout_buckets: 4,
            init_std: 0.3,
            zero_init_output: false,
            use_segment_flags: true,
        }
    }

    fn seq(ids: Vec<usize>, keep: Vec<bool>) -> TokenSequence {
        let n = ids.len();
        TokenSequence {
            token_ids: ids,
            node_of_token: (0..n).collect(),
            span_positions: (0..n).collect(),
            attention_keep: keep,
        }
    }

    fn store(cfg: &EncoderConfig) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        cfg.init_params(12, &mut s, &mut rng_for(1, &[])).unwrap();
        s
    }

    #[test]
    fn single_token_shape() {
        let cfg = small_cfg();
        let s = store(&cfg);
        let sq = seq(vec![3], vec![true]);
        let h = encode_tensor(EncoderInput { seq: &sq, boxes: None, page_size: None }, &cfg, &s).unwrap();
        assert_eq!(h.shape(), &[1, 8]);
        assert!(h.all_finite());
    }

    #[test]
    fn padding_content_does_not_leak() {
        let cfg = small_cfg();
        let s = store(&cfg);
        let keep = vec![true, true, true, false, false];
        let a = seq(vec![4, 5, 6, 7, 8], keep.clone());
        let b = seq(vec![4, 5, 6, 8, 7], keep);
        let boxes = vec![Some(BBox::from([0, 0, 500, 20])); 5];
        let run = |sq: &TokenSequence| {
            encode_tensor(
                EncoderInput { seq: sq, boxes: Some(&boxes), page_size: Some((1000, 1000)) },
                &cfg,
                &s,
            )
            .unwrap()
        };
        let (ha, hb) = (run(&a), run(&b));
        assert_eq!(&ha.data()[..3 * 8], &hb.data()[..3 * 8]);
    }

    #[test]
    fn zero_output_projections_give_embedding_sum() {
        let cfg = EncoderConfig {
            zero_init_output: true,
            use_layout: false,
            use_segment_flags: false,
            ..small_cfg()
        };
        let s = store(&cfg);
        let sq = seq(vec![2, 9, 4], vec![true; 3]);
        let h = encode_tensor(EncoderInput { seq: &sq, boxes: None, page_size: None }, &cfg, &s).unwrap();
        let tok = s.value("enc.tok_emb").unwrap();
        let pos = s.value("enc.pos_emb").unwrap();
        for (i, &id) in sq.token_ids.iter().enumerate() {
            for c in 0..8 {
                assert_eq!(h.get2(i, c), tok.get2(id, c) + pos.get2(i, c));
            }
        }
    }

    #[test]
    fn too_long_is_rejected() {
        let cfg = small_cfg();
        let s = store(&cfg);
        let sq = seq(vec![2; 11], vec![true; 11]);
        assert!(encode_tensor(EncoderInput { seq: &sq, boxes: None, page_size: None }, &cfg, &s).is_err());
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = EncoderConfig {
            hidden_size: 10,
            attn_heads: 4,
            ..small_cfg()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn segment_flags_mark_node_edges() {
        let sq = TokenSequence {
            token_ids: vec![2; 6],
            node_of_token: vec![0, 0, 0, 1, 2, 2],
            span_positions: vec![0, 0, 0, 1, 2, 2],
            attention_keep: vec![true, true, true, true, true, false],
        };
        assert_eq!(segment_flags(&sq), vec![2, 0, 1, 3, 3, 0]);
    }
}
