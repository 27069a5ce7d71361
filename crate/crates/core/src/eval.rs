//! Entity-level precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::doc::{entities_to_tags, tags_to_entities, EntitySet, LabelSet};
use crate::error::Result;

/// Gold/predicted/correct entity counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        match (self.predicted, self.gold) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (p, _) => self.correct as f64 / p as f64,
        }
    }

    pub fn recall(&self) -> f64 {
        match (self.gold, self.predicted) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (g, _) => self.correct as f64 / g as f64,
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    fn add(&mut self, o: Counts) {
        self.gold += o.gold;
        self.predicted += o.predicted;
        self.correct += o.correct;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_type: Vec<TypeReport>,
}

/// Accumulates counts over documents; [`EvalAccumulator::report`] gives
/// micro-averaged scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalAccumulator {
    labels: LabelSet,
    total: Counts,
    per_type: Vec<Counts>,
}

fn span_len(a: &EntitySet, b: &EntitySet) -> usize {
    a.iter().chain(b.iter()).map(|e| e.end + 1).max().unwrap_or(0)
}

/// Exact `(type, start, end)` matches after routing both sides through BIO
/// tags, so scores coincide with BIO-based evaluation.
pub fn match_via_bio(pred: &EntitySet, gold: &EntitySet) -> Result<(EntitySet, EntitySet)> {
    let len = span_len(pred, gold);
    let p = tags_to_entities(&entities_to_tags(pred, len)?);
    let g = tags_to_entities(&entities_to_tags(gold, len)?);
    Ok((p, g))
}

impl EvalAccumulator {
    pub fn new(labels: &LabelSet) -> Self {
        EvalAccumulator {
            labels: labels.clone(),
            total: Counts::default(),
            per_type: vec![Counts::default(); labels.len()],
        }
    }

    pub fn add(&mut self, pred: &EntitySet, gold: &EntitySet) -> Result<()> {
        let (p, g) = match_via_bio(pred, gold)?;
        self.add_spans(&p, &g);
        Ok(())
    }

    /// Direct span comparison, no BIO routing.
    pub fn add_spans(&mut self, pred: &EntitySet, gold: &EntitySet) {
        let mut c = Counts {
            gold: gold.len(),
            predicted: pred.len(),
            correct: 0,
        };
        for e in pred {
            if let Some(t) = self.per_type.get_mut(e.type_index) {
                t.predicted += 1;
            }
            if gold.contains(e) {
                c.correct += 1;
                if let Some(t) = self.per_type.get_mut(e.type_index) {
                    t.correct += 1;
                }
            }
        }
        for e in gold {
            if let Some(t) = self.per_type.get_mut(e.type_index) {
                t.gold += 1;
            }
        }
        self.total.add(c);
    }

    pub fn counts(&self) -> Counts {
        self.total
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            precision: self.total.precision(),
            recall: self.total.recall(),
            f1: self.total.f1(),
            counts: self.total,
            per_type: self
                .per_type
                .iter()
                .enumerate()
                .map(|(i, c)| TypeReport {
                    name: self.labels.name(i).to_string(),
                    precision: c.precision(),
                    recall: c.recall(),
                    f1: c.f1(),
                    counts: *c,
                })
                .collect(),
        }
    }
}

/// Scores one prediction against gold. Overlapping spans inside either
/// set are an error.
pub fn evaluate(pred: &EntitySet, gold: &EntitySet, labels: &LabelSet) -> Result<EvalReport> {
    let mut acc = EvalAccumulator::new(labels);
    acc.add(pred, gold)?;
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::Entity;

    fn labels() -> LabelSet {
        LabelSet::new(["a", "b"]).unwrap()
    }

    fn set(v: &[(usize, usize, usize)]) -> EntitySet {
        v.iter().map(|&(t, s, e)| Entity::new(t, s, e)).collect()
    }

    #[test]
    fn perfect_match() {
        let g = set(&[(0, 0, 1), (1, 3, 3), (0, 5, 6), (1, 8, 9), (0, 11, 11)]);
        let r = evaluate(&g, &g, &labels()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction() {
        let g = set(&[(0, 0, 1)]);
        let r = evaluate(&EntitySet::new(), &g, &labels()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn partial_counts() {
        let g = set(&[(0, 0, 1), (1, 3, 3), (0, 5, 6), (1, 8, 9)]);
        let p = set(&[(0, 0, 1), (1, 3, 3), (0, 5, 6), (0, 8, 9), (1, 11, 12)]);
        let r = evaluate(&p, &g, &labels()).unwrap();
        assert_eq!(r.counts, Counts { gold: 4, predicted: 5, correct: 3 });
        assert!((r.precision - 0.6).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.f1 - 2.0 * 0.6 * 0.75 / 1.35).abs() < 1e-12);
        assert!((r.f1 - 0.6667).abs() < 1e-4);
        assert_eq!(r.per_type[1].counts, Counts { gold: 2, predicted: 2, correct: 1 });
    }

    #[test]
    fn overlap_is_an_error() {
        let p = set(&[(0, 0, 2), (1, 1, 3)]);
        assert!(evaluate(&p, &EntitySet::new(), &labels()).is_err());
    }

    #[test]
    fn report_serializes() {
        let r = evaluate(&set(&[(0, 0, 0)]), &set(&[(0, 0, 0)]), &labels()).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["f1"], 1.0);
        assert_eq!(js["per_type"][0]["name"], "a");
    }
}
