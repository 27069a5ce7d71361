use serde::{Deserialize, Serialize};

use crate::baseline::BaselineKind;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::head::PositionMode;
use crate::loss::BalanceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    Hga,
    Linear,
    Mlp,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Linear, HeadKind::Mlp, HeadKind::Hga];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Hga => "hga",
            HeadKind::Linear => "linear",
            HeadKind::Mlp => "mlp",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            HeadKind::Hga => None,
            HeadKind::Linear => Some(BaselineKind::Linear),
            HeadKind::Mlp => Some(BaselineKind::Mlp),
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hga" => Ok(HeadKind::Hga),
            "linear" => Ok(HeadKind::Linear),
            "mlp" => Ok(HeadKind::Mlp),
            _ => Err(Error::Config(format!("unknown head kind {s:?}"))),
        }
    }
}

fn d_lr() -> f64 {
    1e-3
}
fn d_batch() -> usize {
    4
}
fn d_steps() -> usize {
    2000
}
fn d_eval_every() -> usize {
    100
}
fn d_max_len() -> usize {
    512
}
fn d_one() -> usize {
    1
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}
fn d_head_hidden() -> usize {
    64
}
fn d_rope() -> f64 {
    10000.0
}
fn d_dropout() -> f64 {
    0.1
}
fn d_std() -> f64 {
    0.02
}

/// Training run configuration, read from and written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub head_kind: HeadKind,
    #[serde(default)]
    pub position_mode: PositionMode,
    #[serde(default)]
    pub balance_b: f64,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
    #[serde(default = "d_max_len")]
    pub max_seq_len: usize,
    /// Batches accumulated per optimizer step.
    #[serde(default = "d_one")]
    pub grad_accum: usize,
    /// Linear warmup length in steps; 0 disables warmup.
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_eps: f64,
    /// Encoder shape. Its `max_seq_len` is overridden by the field above.
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default = "d_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "d_rope")]
    pub rope_base: f64,
    /// Decision threshold on hyperedge scores.
    #[serde(default)]
    pub threshold: f64,
    /// Dropout inside the MLP baseline.
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    #[serde(default = "d_one")]
    pub min_count: usize,
    #[serde(default = "d_std")]
    pub head_init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 || self.grad_accum == 0 {
            return bad("batch_size and grad_accum must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        BalanceConfig::new(self.balance_b)?;
        self.encoder_config().validate()
    }

    /// Small-encoder settings for the synthetic desk-scale experiments:
    /// `H = 32`, two blocks of four heads, sequences up to 64 tokens.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            seed,
            max_seq_len: 64,
            encoder: EncoderConfig {
                hidden_size: 32,
                layers: 2,
                attn_heads: 4,
                ffn_size: Some(64),
                ..EncoderConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            max_seq_len: self.max_seq_len,
            ..self.encoder.clone()
        }
    }
}
