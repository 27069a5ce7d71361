//! Score tensor → typed, non-overlapping entity spans.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::doc::{Entity, EntitySet};
use crate::head::ScoreTensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    /// Accept spans in descending score order, skipping any that intersect
    /// an accepted span.
    #[default]
    GreedyByScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub threshold: f64,
    #[serde(default)]
    pub overlap_policy: OverlapPolicy,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            threshold: 0.0,
            overlap_policy: OverlapPolicy::GreedyByScore,
        }
    }
}

/// Candidate ordering for overlap resolution: higher score first, then
/// earlier start, shorter span, lower type index.
pub fn candidate_order<T: Scalar>(a: &(T, Entity), b: &(T, Entity)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.start.cmp(&b.1.start))
        .then(a.1.len().cmp(&b.1.len()))
        .then(a.1.type_index.cmp(&b.1.type_index))
}

/// Cells above `threshold` with `i ≤ j` off padding; for each span only the
/// highest-scoring type survives (lowest index on ties); overlaps are then
/// resolved by `cfg.overlap_policy`.
pub fn decode<T: Scalar>(s: &ScoreTensor<T>, cfg: &DecodeConfig) -> EntitySet {
    let threshold = T::of(cfg.threshold);
    let len = s.len();
    let mut candidates: Vec<(T, Entity)> = Vec::new();
    for i in 0..len {
        for j in i..len {
            if !s.is_valid_cell(i, j) {
                continue;
            }
            let mut best: Option<(T, usize)> = None;
            for t in 0..s.num_types() {
                let v = s.get(t, i, j);
                if v > threshold && best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, t));
                }
            }
            if let Some((v, t)) = best {
                candidates.push((v, Entity::new(t, i, j)));
            }
        }
    }
    match cfg.overlap_policy {
        OverlapPolicy::GreedyByScore => {
            candidates.sort_by(candidate_order);
            let mut accepted: Vec<Entity> = Vec::new();
            for (_, e) in candidates {
                if accepted.iter().all(|a| !a.overlaps(&e)) {
                    accepted.push(e);
                }
            }
            EntitySet::from_vec(accepted)
        }
    }
}
