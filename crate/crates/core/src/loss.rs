//! Balanced hyperedge loss.
//!
//! For each type `α`, with positive cells `P_α` and negative cells `N_α`:
//!
//! ```text
//! L_p,α = log(1 + Σ_{P_α} exp(-s))      L_n,α = log(1 + Σ_{N_α} exp(s))
//! L     = Σ_α (1 + b)·L_p,α + (1 - b)·L_n,α
//! ```
//!
//! Negatives are the upper-triangle, non-padding cells that are not
//! positive; masked cells never enter either set.

use serde::{Deserialize, Serialize};

use crate::doc::EntitySet;
use crate::error::{Error, Result};
use crate::head::ScoreTensor;
use crate::numerics::{log1p_sum_exp, Graph, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub b: f64,
}

impl BalanceConfig {
    pub fn new(b: f64) -> Result<Self> {
        let c = BalanceConfig { b };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.b) {
            return Err(Error::Config(format!("balance factor {} outside [0, 1)", self.b)));
        }
        Ok(())
    }
}

/// Positive cells and negative candidates per type, as flat `i*L + j` indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperedgeLabels {
    len: usize,
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
}

impl HyperedgeLabels {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_types(&self) -> usize {
        self.positives.len()
    }

    /// `(i, j)` pairs of type `t`.
    pub fn positives(&self, t: usize) -> Vec<(usize, usize)> {
        self.positives[t].iter().map(|c| (c / self.len, c % self.len)).collect()
    }

    pub fn positive_cells(&self, t: usize) -> &[usize] {
        &self.positives[t]
    }

    pub fn negative_cells(&self, t: usize) -> &[usize] {
        &self.negatives[t]
    }

    pub fn is_negative(&self, t: usize, i: usize, j: usize) -> bool {
        self.negatives[t].binary_search(&(i * self.len + j)).is_ok()
    }

    pub fn total_negatives(&self) -> usize {
        self.negatives.iter().map(Vec::len).sum()
    }
}

pub fn build_labels(gold: &EntitySet, len: usize, num_types: usize, keep: &[bool]) -> Result<HyperedgeLabels> {
    if keep.len() != len {
        return Err(Error::shape("build_labels", format!("{} keep flags for L={len}", keep.len())));
    }
    let mut positives = vec![Vec::new(); num_types];
    for e in gold {
        if e.type_index >= num_types {
            return Err(Error::InvalidEntity(format!("{e}: type outside 0..{num_types}")));
        }
        if e.start > e.end || e.end >= len {
            return Err(Error::InvalidEntity(format!("{e}: span outside 0..{len}")));
        }
        if !keep[e.start] || !keep[e.end] {
            return Err(Error::InvalidEntity(format!("{e}: touches padding")));
        }
        positives[e.type_index].push(e.start * len + e.end);
    }
    let mut negatives = Vec::with_capacity(num_types);
    for pos in positives.iter_mut() {
        pos.sort_unstable();
        pos.dedup();
        let mut neg = Vec::new();
        for i in (0..len).filter(|&i| keep[i]) {
            for j in (i..len).filter(|&j| keep[j]) {
                let c = i * len + j;
                if pos.binary_search(&c).is_err() {
                    neg.push(c);
                }
            }
        }
        negatives.push(neg);
    }
    Ok(HyperedgeLabels {
        len,
        positives,
        negatives,
    })
}

/// Per-type loss terms and their balanced total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub positive: Vec<T>,
    pub negative: Vec<T>,
    pub total: T,
}

fn check_shapes<T: Scalar>(len: usize, types: usize, labels: &HyperedgeLabels) -> Result<()> {
    if len != labels.len || types != labels.num_types() {
        return Err(Error::shape(
            "balanced_loss",
            format!(
                "scores D={types}, L={len} vs labels D={}, L={}",
                labels.num_types(),
                labels.len
            ),
        ));
    }
    Ok(())
}

/// Loss value for one document.
pub fn balanced_loss<T: Scalar>(
    s: &ScoreTensor<T>,
    labels: &HyperedgeLabels,
    cfg: &BalanceConfig,
) -> Result<LossBreakdown<T>> {
    cfg.validate()?;
    check_shapes::<T>(s.len(), s.num_types(), labels)?;
    let mut positive = Vec::with_capacity(s.num_types());
    let mut negative = Vec::with_capacity(s.num_types());
    for t in 0..s.num_types() {
        let m = s.type_matrix(t);
        positive.push(log1p_sum_exp(labels.positives[t].iter().map(|&c| -m[c])));
        negative.push(log1p_sum_exp(labels.negatives[t].iter().map(|&c| m[c])));
    }
    let (wp, wn) = (T::of(1.0 + cfg.b), T::of(1.0 - cfg.b));
    let total = positive
        .iter()
        .zip(&negative)
        .map(|(p, n)| wp * *p + wn * *n)
        .sum();
    Ok(LossBreakdown {
        positive,
        negative,
        total,
    })
}

/// Records the loss on `g` from per-type masked `L×L` score nodes.
pub fn balanced_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    scores: &[Var],
    labels: &HyperedgeLabels,
    cfg: &BalanceConfig,
) -> Result<Var> {
    cfg.validate()?;
    check_shapes::<T>(labels.len, scores.len(), labels)?;
    let (wp, wn) = (T::of(1.0 + cfg.b), T::of(1.0 - cfg.b));
    let mut total: Option<Var> = None;
    for (t, s) in scores.iter().enumerate() {
        let lp = g.log1p_sum_exp(*s, &labels.positives[t], true)?;
        let ln = g.log1p_sum_exp(*s, &labels.negatives[t], false)?;
        let lp = g.scale(lp, wp)?;
        let ln = g.scale(ln, wn)?;
        let term = g.add(lp, ln)?;
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    match total {
        Some(v) => Ok(v),
        None => g.input(crate::numerics::Tensor::scalar(T::zero())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::Entity;

    #[test]
    fn labels_single_entity() {
        let gold = EntitySet::from_vec(vec![Entity::new(0, 2, 4)]);
        let l = build_labels(&gold, 6, 2, &[true; 6]).unwrap();
        assert_eq!(l.positives(0), vec![(2, 4)]);
        assert!(l.positives(1).is_empty());
        assert_eq!(l.negative_cells(1).len(), 21);
        assert_eq!(l.negative_cells(0).len(), 20);
        assert!(!l.is_negative(0, 2, 4));
        assert!(!l.is_negative(0, 4, 2));
    }

    #[test]
    fn labels_negative_count_matches_enumeration() {
        let keep = [true, true, true, true, false];
        let gold = EntitySet::from_vec(vec![Entity::new(0, 0, 1), Entity::new(2, 3, 3)]);
        let l = build_labels(&gold, 5, 3, &keep).unwrap();
        // Enumerate upper-triangle cells not touching padding.
        let mut valid = 0;
        for i in 0..5 {
            for j in i..5 {
                if keep[i] && keep[j] {
                    valid += 1;
                }
            }
        }
        assert_eq!(valid, 10);
        assert_eq!(l.total_negatives(), 3 * valid - 2);
        // Without padding the count is 3·15 − 2.
        let l = build_labels(&gold, 5, 3, &[true; 5]).unwrap();
        assert_eq!(l.total_negatives(), 3 * 15 - 2);
    }

    #[test]
    fn labels_reject_padding_entity() {
        let gold = EntitySet::from_vec(vec![Entity::new(0, 1, 3)]);
        assert!(build_labels(&gold, 4, 1, &[true, true, true, false]).is_err());
        let gold = EntitySet::from_vec(vec![Entity::new(4, 1, 1)]);
        assert!(build_labels(&gold, 4, 2, &[true; 4]).is_err());
    }

    #[test]
    fn single_positive_at_zero_is_log2() {
        let gold = EntitySet::from_vec(vec![Entity::new(0, 0, 0)]);
        let l = build_labels(&gold, 1, 1, &[true]).unwrap();
        let s = ScoreTensor::new(1, 1, vec![0.0f64], vec![true]).unwrap();
        let r = balanced_loss(&s, &l, &BalanceConfig { b: 0.0 }).unwrap();
        assert!((r.total - 2f64.ln()).abs() < 1e-12);
        assert_eq!(r.negative[0], 0.0);
    }

    #[test]
    fn b_out_of_range_errors() {
        assert!(BalanceConfig::new(1.0).is_err());
        assert!(BalanceConfig::new(-0.1).is_err());
        assert!(BalanceConfig::new(0.0).is_ok());
    }
}
