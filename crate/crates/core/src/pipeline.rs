//! Finite-difference check of the full encoder → HGA head → balanced loss
//! pipeline on a random document.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{BBox, Entity, EntitySet, TokenSequence};
use crate::encoder::{encode, EncoderConfig, EncoderInput};
use crate::error::{Error, Result};
use crate::head::{init_head_params, score_graph, HeadConfig, PositionMode};
use crate::loss::{balanced_loss_graph, build_labels, BalanceConfig};
use crate::numerics::{finite_diff_check, FdReport, FdTolerance, ParamStore};
use crate::rng::rng_for;

const VOCAB: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCheck {
    /// Sequence length `L`, including `padding` trailing pad tokens.
    pub len: usize,
    pub padding: usize,
    /// Entity types `D`.
    pub num_types: usize,
    /// Encoder width `H`.
    pub hidden: usize,
    /// Head width `d`.
    pub head_hidden: usize,
    pub layers: usize,
    pub position_mode: PositionMode,
    pub balance_b: f64,
    pub init_std: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for PipelineCheck {
    fn default() -> Self {
        PipelineCheck {
            len: 12,
            padding: 2,
            num_types: 3,
            hidden: 16,
            head_hidden: 8,
            layers: 2,
            position_mode: PositionMode::Span,
            balance_b: 0.3,
            init_std: 0.3,
            epsilon: 1e-5,
            seed: 0,
        }
    }
}

/// A random document: nodes of 1–3 tokens, one box per node, one entity
/// on roughly every other node.
struct Sample {
    seq: TokenSequence,
    boxes: Vec<Option<BBox>>,
    gold: EntitySet,
}

fn sample(c: &PipelineCheck, rng: &mut impl Rng) -> Sample {
    let real = c.len - c.padding;
    let mut node_of_token = Vec::with_capacity(c.len);
    let mut boxes = Vec::with_capacity(c.len);
    let mut gold = Vec::new();
    let mut node = 0;
    while node_of_token.len() < real {
        let n = rng.random_range(1..=3).min(real - node_of_token.len());
        let start = node_of_token.len();
        let x0 = rng.random_range(0..900);
        let y0 = rng.random_range(0..900);
        let b = BBox {
            x0,
            y0,
            x1: x0 + rng.random_range(10..100),
            y1: y0 + rng.random_range(10..100),
        };
        for _ in 0..n {
            node_of_token.push(node);
            boxes.push(Some(b));
        }
        if c.num_types > 0 && rng.random_bool(0.5) {
            gold.push(Entity::new(rng.random_range(0..c.num_types), start, start + n - 1));
        }
        node += 1;
    }
    let last = node_of_token.last().copied().unwrap_or(0);
    node_of_token.resize(c.len, last);
    boxes.resize(c.len, None);
    let mut token_ids: Vec<usize> = (0..real).map(|_| rng.random_range(2..VOCAB)).collect();
    token_ids.resize(c.len, 0);
    let attention_keep = (0..c.len).map(|i| i < real).collect();
    Sample {
        seq: TokenSequence {
            token_ids,
            span_positions: node_of_token.clone(),
            node_of_token,
            attention_keep,
        },
        boxes,
        gold: EntitySet::from_vec(gold),
    }
}

impl PipelineCheck {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            hidden_size: self.hidden,
            layers: self.layers,
            attn_heads: 2,
            ffn_size: Some(2 * self.hidden),
            max_seq_len: self.len,
            init_std: self.init_std,
            zero_init_output: false,
            ..EncoderConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.len == 0 || self.padding >= self.len {
            return Err(Error::Config(format!(
                "need at least one real token (L={}, padding={})",
                self.len, self.padding
            )));
        }
        if self.hidden % 2 != 0 {
            return Err(Error::Config("hidden size must be even".into()));
        }
        Ok(())
    }

    /// Random parameters and document from `seed`, then the element-wise
    /// comparison of analytic and central-difference gradients.
    pub fn run(&self) -> Result<FdReport> {
        self.validate()?;
        let mut rng = rng_for(self.seed, &[]);
        let enc = self.encoder_config();
        let head = HeadConfig {
            head_hidden: self.head_hidden,
            position_mode: self.position_mode,
            ..HeadConfig::new(self.num_types)
        };
        head.validate()?;
        let balance = BalanceConfig::new(self.balance_b)?;
        let mut params = ParamStore::<f64>::new();
        enc.init_params(VOCAB, &mut params, &mut rng)?;
        init_head_params(&mut params, self.num_types, self.hidden, self.head_hidden, self.init_std, &mut rng)?;
        let s = sample(self, &mut rng);
        let labels = build_labels(&s.gold, self.len, self.num_types, &s.seq.attention_keep)?;
        let positions = head.positions(&s.seq);
        let objective = |g: &mut crate::numerics::Graph<f64>, p: &ParamStore<f64>| {
            let input = EncoderInput {
                seq: &s.seq,
                boxes: Some(&s.boxes),
                page_size: Some((1000, 1000)),
            };
            let h = encode(g, input, &enc, p)?;
            let scores = score_graph(g, h, positions.as_deref(), &s.seq.attention_keep, &head, p)?;
            balanced_loss_graph(g, &scores, &labels, &balance)
        };
        finite_diff_check(&params, self.epsilon, FdTolerance::default(), objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_pipeline_passes() {
        let c = PipelineCheck {
            len: 5,
            padding: 1,
            num_types: 2,
            hidden: 4,
            head_hidden: 4,
            layers: 1,
            ..PipelineCheck::default()
        };
        let r = c.run().unwrap();
        assert!(r.passed(), "{:?}", r.flagged());
    }

    #[test]
    fn all_padding_is_rejected() {
        let c = PipelineCheck {
            len: 3,
            padding: 3,
            ..PipelineCheck::default()
        };
        assert!(c.run().is_err());
    }
}
