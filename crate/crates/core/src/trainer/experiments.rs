use std::fmt::Write as _;

use super::config::{HeadKind, TrainConfig};
use super::{train, MetricHistory, TrainOutput};
use crate::doc::{Document, LabelSet};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::head::PositionMode;
use crate::scalar::Scalar;

/// Train, dev (checkpoint selection) and test (reported scores) documents.
#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a [Document],
    pub dev: &'a [Document],
    pub test: &'a [Document],
}

fn test_report<T: Scalar>(out: &TrainOutput<T>, test: &[Document]) -> Result<EvalReport> {
    let ex = out.best.prepare_all(test)?;
    out.best.evaluate(&ex)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub b: f64,
    pub best_step: usize,
    pub report: EvalReport,
}

/// One full training run per balance factor, all with the same seed.
pub fn sweep_balance<T: Scalar>(
    cfg: &TrainConfig,
    values: &[f64],
    splits: Splits<'_>,
    labels: &LabelSet,
) -> Result<Vec<SweepRow>> {
    if let Some(b) = values.iter().find(|b| !(0.0..1.0).contains(*b)) {
        return Err(Error::Config(format!("balance factor {b} outside [0, 1)")));
    }
    values
        .iter()
        .map(|&b| {
            let c = TrainConfig {
                balance_b: b,
                head_kind: HeadKind::Hga,
                ..cfg.clone()
            };
            let out = train::<T>(&c, splits.train, splits.dev, labels)?;
            Ok(SweepRow {
                b,
                best_step: out.best_step,
                report: test_report(&out, splits.test)?,
            })
        })
        .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("b\tprecision\trecall\tf1\tbest_step\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.1}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.b, r.report.precision, r.report.recall, r.report.f1, r.best_step
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadRow {
    pub head: HeadKind,
    pub best_step: usize,
    pub report: EvalReport,
}

/// Linear, MLP and HGA heads under one encoder config, seed and budget.
pub fn compare_heads<T: Scalar>(cfg: &TrainConfig, splits: Splits<'_>, labels: &LabelSet) -> Result<Vec<HeadRow>> {
    HeadKind::ALL
        .iter()
        .map(|&head| {
            let c = TrainConfig {
                head_kind: head,
                ..cfg.clone()
            };
            let out = train::<T>(&c, splits.train, splits.dev, labels)?;
            Ok(HeadRow {
                head,
                best_step: out.best_step,
                report: test_report(&out, splits.test)?,
            })
        })
        .collect()
}

pub fn heads_tsv(rows: &[HeadRow]) -> String {
    let mut out = String::from("head\tprecision\trecall\tf1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            r.head.as_str(),
            r.report.precision,
            r.report.recall,
            r.report.f1
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub mode: PositionMode,
    pub history: MetricHistory,
    pub test: EvalReport,
}

/// One HGA run per position mode (`none`, `token`, `span`).
pub fn ablate_positions<T: Scalar>(
    cfg: &TrainConfig,
    splits: Splits<'_>,
    labels: &LabelSet,
) -> Result<Vec<AblationRun>> {
    PositionMode::ALL
        .iter()
        .map(|&mode| {
            let c = TrainConfig {
                position_mode: mode,
                head_kind: HeadKind::Hga,
                ..cfg.clone()
            };
            let out = train::<T>(&c, splits.train, splits.dev, labels)?;
            Ok(AblationRun {
                mode,
                test: test_report(&out, splits.test)?,
                history: out.history,
            })
        })
        .collect()
}

/// Dev F1 at the last evaluation of a run.
pub fn ablation_final_f1(run: &AblationRun) -> f64 {
    run.history.series("dev", "f1").last().map_or(0.0, |p| p.1)
}
