//! Hypergraph attention head.
//!
//! Each entity type `α` is one attention head: `q_α = h·W_q,α + b_q,α`,
//! `k_α = h·W_k,α + b_k,α`, and the score of span `[i, j]` is
//! `⟨R(p_i) q_α[i], R(p_j) k_α[j]⟩` where `R` is the rotary rotation and `p`
//! the span positions (the node index of each token). Cells below the
//! diagonal and cells touching padding receive the additive mask value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::TokenSequence;
use crate::error::{Error, Result};
use crate::numerics::{rotary_rotate, Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

/// Which positions drive the rotary encoding of the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionMode {
    /// No rotary encoding.
    None,
    /// Token index.
    Token,
    /// Node index shared by all tokens of a node.
    #[default]
    Span,
}

impl PositionMode {
    pub const ALL: [PositionMode; 3] = [PositionMode::None, PositionMode::Token, PositionMode::Span];

    pub fn as_str(self) -> &'static str {
        match self {
            PositionMode::None => "none",
            PositionMode::Token => "token",
            PositionMode::Span => "span",
        }
    }
}

impl std::str::FromStr for PositionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PositionMode::None),
            "token" => Ok(PositionMode::Token),
            "span" => Ok(PositionMode::Span),
            _ => Err(Error::Config(format!("unknown position mode {s:?}"))),
        }
    }
}

fn default_head_hidden() -> usize {
    64
}
fn default_rope_base() -> f64 {
    10000.0
}
fn default_mask_value() -> f64 {
    -1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub num_types: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
    #[serde(default = "default_mask_value")]
    pub mask_value: f64,
    #[serde(default)]
    pub position_mode: PositionMode,
}

impl HeadConfig {
    pub fn new(num_types: usize) -> Self {
        HeadConfig {
            num_types,
            head_hidden: default_head_hidden(),
            rope_base: default_rope_base(),
            mask_value: default_mask_value(),
            position_mode: PositionMode::Span,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_types == 0 {
            return Err(Error::Config("head needs at least one entity type".into()));
        }
        if self.head_hidden == 0 || self.head_hidden % 2 != 0 {
            return Err(Error::Config(format!(
                "head hidden size {} must be even and positive",
                self.head_hidden
            )));
        }
        if !(self.mask_value < -1e6) {
            return Err(Error::Config(format!("mask value {} is not large and negative", self.mask_value)));
        }
        Ok(())
    }

    /// Positions fed to the rotary encoding, or `None` when disabled.
    pub fn positions(&self, seq: &TokenSequence) -> Option<Vec<i64>> {
        match self.position_mode {
            PositionMode::None => None,
            PositionMode::Token => Some((0..seq.len() as i64).collect()),
            PositionMode::Span => Some(span_positions(seq).into_iter().map(|p| p as i64).collect()),
        }
    }
}

fn pname(kind: &str, t: usize) -> String {
    format!("hga.{t}.{kind}")
}

/// Projection weights of one hyperedge type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeProjection<T> {
    /// `H×d`
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
}

/// All head parameters, one projection pair per type.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub types: Vec<TypeProjection<T>>,
}

impl<T: Scalar> HeadParams<T> {
    pub fn zeros(num_types: usize, hidden: usize, head_hidden: usize) -> Self {
        HeadParams {
            types: (0..num_types)
                .map(|_| TypeProjection {
                    wq: Tensor::zeros(&[hidden, head_hidden]),
                    bq: Tensor::zeros(&[head_hidden]),
                    wk: Tensor::zeros(&[hidden, head_hidden]),
                    bk: Tensor::zeros(&[head_hidden]),
                })
                .collect(),
        }
    }

    pub fn init(num_types: usize, hidden: usize, head_hidden: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        init_head_params(&mut store, num_types, hidden, head_hidden, std, rng)?;
        HeadParams::from_store(&store, num_types)
    }

    pub fn write_to(&self, store: &mut ParamStore<T>) -> Result<()> {
        for (t, p) in self.types.iter().enumerate() {
            store.insert(pname("wq", t), p.wq.clone())?;
            store.insert(pname("bq", t), p.bq.clone())?;
            store.insert(pname("wk", t), p.wk.clone())?;
            store.insert(pname("bk", t), p.bk.clone())?;
        }
        Ok(())
    }

    pub fn from_store(store: &ParamStore<T>, num_types: usize) -> Result<Self> {
        let types = (0..num_types)
            .map(|t| {
                Ok(TypeProjection {
                    wq: store.value(&pname("wq", t))?.clone(),
                    bq: store.value(&pname("bq", t))?.clone(),
                    wk: store.value(&pname("wk", t))?.clone(),
                    bk: store.value(&pname("bk", t))?.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(HeadParams { types })
    }
}

/// Registers per-type projections `hga.{t}.{wq,bq,wk,bk}` in `store`.
pub fn init_head_params<T: Scalar>(
    store: &mut ParamStore<T>,
    num_types: usize,
    hidden: usize,
    head_hidden: usize,
    std: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    for t in 0..num_types {
        store.insert_normal(pname("wq", t), &[hidden, head_hidden], std, rng)?;
        store.insert_zeros(pname("bq", t), &[head_hidden])?;
        store.insert_normal(pname("wk", t), &[hidden, head_hidden], std, rng)?;
        store.insert_zeros(pname("bk", t), &[head_hidden])?;
    }
    Ok(())
}

/// `D×L×L` hyperedge scores plus the keep mask they were computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor<T> {
    num_types: usize,
    len: usize,
    data: Vec<T>,
    keep: Vec<bool>,
}

impl<T: Scalar> ScoreTensor<T> {
    pub fn new(num_types: usize, len: usize, data: Vec<T>, keep: Vec<bool>) -> Result<Self> {
        if data.len() != num_types * len * len || keep.len() != len {
            return Err(Error::shape(
                "score_tensor",
                format!("{} values / {} keep flags for D={num_types}, L={len}", data.len(), keep.len()),
            ));
        }
        Ok(ScoreTensor {
            num_types,
            len,
            data,
            keep,
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> T {
        self.data[(t * self.len + i) * self.len + j]
    }

    pub fn set(&mut self, t: usize, i: usize, j: usize, v: T) {
        self.data[(t * self.len + i) * self.len + j] = v;
    }

    /// Row-major `L×L` slice of type `t`.
    pub fn type_matrix(&self, t: usize) -> &[T] {
        let n = self.len * self.len;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// True when `[i, j]` can be a span: `i ≤ j` and neither end is padding.
    pub fn is_valid_cell(&self, i: usize, j: usize) -> bool {
        i <= j && self.keep[i] && self.keep[j]
    }
}

/// Span position of every token: the index of the node it came from.
pub fn span_positions(seq: &TokenSequence) -> Vec<usize> {
    seq.node_of_token.clone()
}

/// Rotary encoding of the rows of `v` at integer positions `p`.
pub fn rotary_apply<T: Scalar>(v: &Tensor<T>, p: &[i64], rope_base: f64) -> Result<Tensor<T>> {
    rotary_rotate(v, p, rope_base)
}

/// Cells masked in every type matrix: lower triangle and any padding row or column.
pub fn score_mask(keep: &[bool]) -> Vec<bool> {
    let l = keep.len();
    (0..l * l)
        .map(|c| {
            let (i, j) = (c / l, c % l);
            i > j || !keep[i] || !keep[j]
        })
        .collect()
}

/// Records the head on `g`, returning one masked `L×L` node per type.
pub fn score_graph<T: Scalar>(
    g: &mut Graph<T>,
    h: Var,
    positions: Option<&[i64]>,
    keep: &[bool],
    cfg: &HeadConfig,
    store: &ParamStore<T>,
) -> Result<Vec<Var>> {
    let (len, _) = g.value(h).dims2();
    if keep.len() != len {
        return Err(Error::shape("score", format!("{} keep flags for {len} tokens", keep.len())));
    }
    if positions.is_some_and(|p| p.len() != len) {
        return Err(Error::shape("score", "position count differs from sequence length"));
    }
    let mask = score_mask(keep);
    let mut out = Vec::with_capacity(cfg.num_types);
    for t in 0..cfg.num_types {
        let wq = g.param(store, &pname("wq", t))?;
        let bq = g.param(store, &pname("bq", t))?;
        let wk = g.param(store, &pname("wk", t))?;
        let bk = g.param(store, &pname("bk", t))?;
        let q = g.matmul(h, wq)?;
        let mut q = g.add_row(q, bq)?;
        let k = g.matmul(h, wk)?;
        let mut k = g.add_row(k, bk)?;
        if let Some(p) = positions {
            q = g.rotary(q, p, cfg.rope_base)?;
            k = g.rotary(k, p, cfg.rope_base)?;
        }
        let s = g.matmul_bt(q, k)?;
        out.push(g.masked_fill(s, &mask, T::of(cfg.mask_value))?);
    }
    Ok(out)
}

/// Collects per-type score nodes into a [`ScoreTensor`].
pub fn collect_scores<T: Scalar>(g: &Graph<T>, scores: &[Var], keep: &[bool]) -> Result<ScoreTensor<T>> {
    let len = keep.len();
    let mut data = Vec::with_capacity(scores.len() * len * len);
    for s in scores {
        data.extend_from_slice(g.value(*s).data());
    }
    ScoreTensor::new(scores.len(), len, data, keep.to_vec())
}

/// Scores of every type for features `h` (`L×H`).
pub fn score<T: Scalar>(
    h: &Tensor<T>,
    positions: Option<&[i64]>,
    params: &HeadParams<T>,
    cfg: &HeadConfig,
    keep: &[bool],
) -> Result<ScoreTensor<T>> {
    if params.types.len() != cfg.num_types {
        return Err(Error::shape(
            "score",
            format!("{} projections for {} types", params.types.len(), cfg.num_types),
        ));
    }
    let (_, hidden) = h.dims2();
    for p in &params.types {
        if p.wq.dims2() != (hidden, cfg.head_hidden) || p.wk.dims2() != (hidden, cfg.head_hidden) {
            return Err(Error::shape(
                "score",
                format!("projection {:?} for H={hidden}, d={}", p.wq.shape(), cfg.head_hidden),
            ));
        }
    }
    let mut store = ParamStore::new();
    params.write_to(&mut store)?;
    let mut g = Graph::new();
    let hv = g.input(h.clone())?;
    let s = score_graph(&mut g, hv, positions, keep, cfg, &store)?;
    collect_scores(&g, &s, keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_positions_follow_nodes() {
        let seq = TokenSequence {
            token_ids: vec![2; 5],
            node_of_token: vec![0, 0, 1, 1, 1],
            span_positions: vec![0, 0, 1, 1, 1],
            attention_keep: vec![true; 5],
        };
        assert_eq!(span_positions(&seq), vec![0, 0, 1, 1, 1]);
        let cfg = HeadConfig::new(1);
        assert_eq!(cfg.positions(&seq).unwrap(), vec![0, 0, 1, 1, 1]);
        let tok = HeadConfig {
            position_mode: PositionMode::Token,
            ..cfg.clone()
        };
        assert_eq!(tok.positions(&seq).unwrap(), vec![0, 1, 2, 3, 4]);
        let none = HeadConfig {
            position_mode: PositionMode::None,
            ..cfg
        };
        assert!(none.positions(&seq).is_none());
    }

    #[test]
    fn zero_position_is_identity() {
        let v = Tensor::from_rows(&[vec![0.3, -1.0, 2.0, 0.5]]).unwrap();
        assert_eq!(rotary_apply(&v, &[0], 10000.0).unwrap(), v);
        assert!(rotary_apply(&Tensor::<f64>::zeros(&[1, 3]), &[0], 10000.0).is_err());
    }

    #[test]
    fn zero_params_score_zero_above_diagonal() {
        let cfg = HeadConfig {
            head_hidden: 4,
            ..HeadConfig::new(2)
        };
        let params = HeadParams::<f64>::zeros(2, 3, 4);
        let h = Tensor::filled(&[4, 3], 0.7);
        let keep = vec![true, true, true, false];
        let s = score(&h, Some(&[0, 0, 1, 1]), &params, &cfg, &keep).unwrap();
        for t in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    let v = s.get(t, i, j);
                    if s.is_valid_cell(i, j) {
                        assert_eq!(v, 0.0);
                    } else {
                        assert!(v <= cfg.mask_value / 2.0);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(HeadConfig::new(0).validate().is_err());
        let odd = HeadConfig {
            head_hidden: 7,
            ..HeadConfig::new(1)
        };
        assert!(odd.validate().is_err());
        assert!(HeadConfig::new(3).validate().is_ok());
        assert_eq!("span".parse::<PositionMode>().unwrap(), PositionMode::Span);
    }
}
