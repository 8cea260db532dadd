//! CSV artifacts. Floats use Rust's shortest round-trip formatting, so equal values
//! always produce equal bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::instrument::{LandscapeGrid, TrajectoryRecord};
use super::metrics::MetricsReport;
use super::synth::{SynthSeqResult, SynthTimeResult};
use super::EpochRecord;

pub fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn metrics_row(out: &mut String, epoch: usize, m: &MetricsReport, gap: f64) {
    let _ = writeln!(
        out,
        "{epoch},{},{},{},{},{},{},{gap}",
        m.split, m.average_precision, m.auc, m.recall_at_k, m.mrr, m.loss
    );
}

/// `epoch,split,ap,auc,recall_at_k,mrr,loss,gap`, three rows per epoch.
pub fn epoch_metrics(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,split,ap,auc,recall_at_k,mrr,loss,gap\n");
    for rec in history {
        let gap = rec.generalization_gap();
        for m in [&rec.train, &rec.val, &rec.test] {
            metrics_row(&mut out, rec.epoch, m, gap);
        }
    }
    out
}

/// Same columns as [`epoch_metrics`] for standalone reports; `gap` is left empty.
pub fn reports(reports: &[MetricsReport]) -> String {
    let mut out = String::from("epoch,split,ap,auc,recall_at_k,mrr,loss,gap\n");
    for m in reports {
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},",
            m.split, m.average_precision, m.auc, m.recall_at_k, m.mrr, m.loss
        );
    }
    out
}

/// `x,y,loss`
pub fn landscape(grid: &LandscapeGrid) -> String {
    let mut out = String::from("x,y,loss\n");
    for (i, x) in grid.coords.iter().enumerate() {
        for (j, y) in grid.coords.iter().enumerate() {
            let _ = writeln!(out, "{x},{y},{}", grid.losses[i][j]);
        }
    }
    out
}

/// `t,r,theta`
pub fn trajectory(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from("t,r,theta\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.t, r.r, r.theta);
    }
    out
}

/// `mode,step,loss,accuracy,encoder_grad_norm,classifier_grad_norm`
pub fn synth_time(results: &[SynthTimeResult]) -> String {
    let mut out = String::from("mode,step,loss,accuracy,encoder_grad_norm,classifier_grad_norm\n");
    for res in results {
        for s in &res.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                res.mode, s.step, s.loss, s.accuracy, s.encoder_grad_norm, s.classifier_grad_norm
            );
        }
    }
    out
}

/// `encoder,task,step,train_accuracy,heldout_accuracy`; held-out accuracy appears on the
/// last row of each run.
pub fn synth_seq(results: &[SynthSeqResult]) -> String {
    let mut out = String::from("encoder,task,step,train_accuracy,heldout_accuracy\n");
    for res in results {
        let last = res.train_accuracy.len().saturating_sub(1);
        for (i, (step, acc)) in res.train_accuracy.iter().enumerate() {
            let held = if i == last {
                res.heldout_accuracy.to_string()
            } else {
                String::new()
            };
            let _ = writeln!(out, "{},{},{step},{acc},{held}", res.encoder, res.task);
        }
    }
    out
}

/// One row per ablation variant.
pub fn ablation(axis: &str, rows: &[(String, MetricsReport)]) -> String {
    let mut out = format!("{axis},test_ap,test_auc,recall_at_k,mrr,loss\n");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{}",
            m.average_precision, m.auc, m.recall_at_k, m.mrr, m.loss
        );
    }
    out
}
