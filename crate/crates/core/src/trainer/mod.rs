//! Training loop, metric history and the comparison experiments.

mod config;
mod experiments;
mod model;

use std::fmt::Write as _;

use rand::seq::SliceRandom;

pub use config::{HeadKind, TrainConfig};
pub use experiments::{
    ablate_positions, ablation_final_f1, compare_heads, heads_tsv, sweep_balance, sweep_tsv, AblationRun, HeadRow,
    Splits, SweepRow,
};
pub use model::{prepare_example, Example, Model};

use crate::doc::{build_vocab, Document, LabelSet};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::numerics::{adam_step, AdamConfig, Graph};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const SHUFFLE_STREAM: u64 = 0x7368_7566;
const DROPOUT_STREAM: u64 = 0x6472_6f70;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Every recorded `(step, split, metric, value)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricHistory {
    pub rows: Vec<MetricRow>,
}

impl MetricHistory {
    pub fn push(&mut self, step: usize, split: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            step,
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    fn push_report(&mut self, step: usize, split: &str, r: &EvalReport) {
        self.push(step, split, "precision", r.precision);
        self.push(step, split, "recall", r.recall);
        self.push(step, split, "f1", r.f1);
    }

    /// `(step, value)` pairs of one split/metric.
    pub fn series(&self, split: &str, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| (r.step, r.value))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,split,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.step, r.split, r.metric, r.value);
        }
        out
    }
}

/// Best-by-dev-F1 model plus the full history of the run.
#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub best: Model<T>,
    pub best_step: usize,
    pub best_dev: EvalReport,
    pub last: Model<T>,
    pub history: MetricHistory,
}

/// Endless stream of mini-batches; each epoch is a fresh permutation seeded
/// by `(seed, epoch)`.
struct BatchStream {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = BatchStream {
            n,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        self.order.shuffle(&mut rng_for(self.seed, &[SHUFFLE_STREAM, self.epoch]));
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.epoch += 1;
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Trains from scratch on `train_docs`, evaluating on `dev_docs` at step 0,
/// every `eval_every` steps and at the final step.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    train_docs: &[Document],
    dev_docs: &[Document],
    labels: &LabelSet,
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = build_vocab(train_docs, cfg.min_count)?;
    let mut model = Model::<T>::new(cfg.clone(), labels.clone(), vocab)?;
    let train_ex: Vec<_> = model
        .prepare_all(train_docs)?
        .into_iter()
        .filter(|e| !e.is_empty())
        .collect();
    if train_ex.is_empty() {
        return Err(Error::Config("no training document has any tokens".into()));
    }
    let dev_ex = model.prepare_all(dev_docs)?;

    let mut history = MetricHistory::default();
    let first = model.evaluate(&dev_ex)?;
    history.push_report(0, "dev", &first);
    let mut best = (model.params.values_only(), 0usize, first);

    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let mut stream = BatchStream::new(train_ex.len(), cfg.seed);
    let per_step = cfg.batch_size * cfg.grad_accum;
    let seed_scale = T::one() / T::of_usize(per_step);

    for step in 1..=cfg.max_steps {
        model.params.zero_grad();
        let mut dropout_rng = rng_for(cfg.seed, &[DROPOUT_STREAM, step as u64]);
        let mut total = 0.0;
        for _ in 0..cfg.grad_accum {
            for idx in stream.next_batch(cfg.batch_size) {
                let mut g = Graph::new();
                let loss = model
                    .loss_graph(&mut g, &train_ex[idx], &mut dropout_rng)
                    .map_err(|e| diverged(step, e))?
                    .expect("empty examples are filtered");
                total += g.scalar(loss).as_f64();
                g.backward(loss, seed_scale, &mut model.params)
                    .map_err(|e| diverged(step, e))?;
            }
        }
        let mean_loss = total / per_step as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("loss {mean_loss}"),
            });
        }
        history.push(step, "train", "loss", mean_loss);
        let lr = if cfg.warmup_steps > 0 {
            cfg.lr * (step as f64 / cfg.warmup_steps as f64).min(1.0)
        } else {
            cfg.lr
        };
        adam_step(&mut model.params, &AdamConfig { lr, ..adam }, step)?;

        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let r = model.evaluate(&dev_ex)?;
            history.push_report(step, "dev", &r);
            if r.f1 > best.2.f1 {
                best = (model.params.values_only(), step, r);
            }
        }
    }

    let best_model = Model {
        params: best.0,
        ..model.clone()
    };
    Ok(TrainOutput {
        best: best_model,
        best_step: best.1,
        best_dev: best.2,
        last: model,
        history,
    })
}
