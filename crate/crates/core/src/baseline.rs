//! Token-classification baseline heads over BIO tags.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{tags_to_entities, EntitySet, Tag};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Linear,
    Mlp,
}

/// `2D + 1` tags: `O` plus `B-`/`I-` per type.
pub fn num_tags(num_types: usize) -> usize {
    2 * num_types + 1
}

pub fn init_baseline_params<T: Scalar>(
    store: &mut ParamStore<T>,
    kind: BaselineKind,
    hidden: usize,
    num_types: usize,
    std: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let c = num_tags(num_types);
    match kind {
        BaselineKind::Linear => {
            store.insert_normal("linear.w", &[hidden, c], std, rng)?;
            store.insert_zeros("linear.b", &[c])?;
        }
        BaselineKind::Mlp => {
            store.insert_normal("mlp.w1", &[hidden, hidden], std, rng)?;
            store.insert_zeros("mlp.b1", &[hidden])?;
            store.insert_normal("mlp.w2", &[hidden, c], std, rng)?;
            store.insert_zeros("mlp.b2", &[c])?;
        }
    }
    Ok(())
}

/// Inverted dropout applied only while training.
pub struct Dropout<'a, R> {
    pub p: f64,
    pub rng: &'a mut R,
}

/// Per-token tag logits, `L × (2D+1)`.
pub fn baseline_logits<T: Scalar, R: Rng>(
    g: &mut Graph<T>,
    h: Var,
    kind: BaselineKind,
    store: &ParamStore<T>,
    dropout: Option<Dropout<'_, R>>,
) -> Result<Var> {
    match kind {
        BaselineKind::Linear => {
            let w = g.param(store, "linear.w")?;
            let b = g.param(store, "linear.b")?;
            let y = g.matmul(h, w)?;
            g.add_row(y, b)
        }
        BaselineKind::Mlp => {
            let w1 = g.param(store, "mlp.w1")?;
            let b1 = g.param(store, "mlp.b1")?;
            let z = g.matmul(h, w1)?;
            let z = g.add_row(z, b1)?;
            let mut z = g.tanh(z)?;
            if let Some(Dropout { p, rng }) = dropout {
                if p > 0.0 {
                    if p >= 1.0 {
                        return Err(Error::Config(format!("dropout {p} must be < 1")));
                    }
                    let keep = T::of(1.0 / (1.0 - p));
                    let mask: Vec<T> = (0..g.value(z).len())
                        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                        .collect();
                    let m = g.input(Tensor::new(g.value(z).shape().to_vec(), mask)?)?;
                    z = g.mul(z, m)?;
                }
            }
            let w2 = g.param(store, "mlp.w2")?;
            let b2 = g.param(store, "mlp.b2")?;
            let y = g.matmul(z, w2)?;
            g.add_row(y, b2)
        }
    }
}

/// Mean token-level cross-entropy of `logits` against `targets` (tag indices).
pub fn token_cross_entropy<T: Scalar>(g: &mut Graph<T>, logits: Var, targets: &[usize]) -> Result<Var> {
    let (rows, c) = g.value(logits).dims2();
    if targets.len() != rows {
        return Err(Error::shape("cross_entropy", format!("{} targets for {rows} rows", targets.len())));
    }
    let lp = g.log_softmax_rows(logits)?;
    let idx: Vec<usize> = targets.iter().enumerate().map(|(r, t)| r * c + t).collect();
    let picked = g.gather(lp, &idx)?;
    let m = g.mean(picked)?;
    g.scale(m, -T::one())
}

/// Softmax over each row of `logits`.
pub fn tag_probabilities<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let v = g.input(logits.clone())?;
    let p = g.softmax_rows(v)?;
    Ok(g.value(p).clone())
}

/// Row argmax; ties go to the lowest tag index.
pub fn argmax_tags<T: Scalar>(logits: &Tensor<T>) -> Vec<Tag> {
    let (rows, c) = logits.dims2();
    (0..rows)
        .map(|r| {
            let row = &logits.data()[r * c..(r + 1) * c];
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            Tag::from_index(best)
        })
        .collect()
}

/// Argmax tags decoded with BIO repair.
pub fn decode_tags<T: Scalar>(logits: &Tensor<T>) -> EntitySet {
    tags_to_entities(&argmax_tags(logits))
}
