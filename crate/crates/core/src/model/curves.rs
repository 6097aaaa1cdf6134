use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::metrics::{ConfusionMatrix, Metrics};
use super::train::{EpochRow, TrainLog};

pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

/// Floats use Rust's shortest round-trip formatting, so parsing the CSV back
/// recovers the rows exactly.
pub fn write_curves_csv(rows: &[EpochRow]) -> String {
    let mut s = String::from(CURVES_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
        )
        .unwrap();
    }
    s
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<EpochRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(Error::invalid("curves file has an unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::invalid(format!("curves row {}: `{line}`", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                test_loss: num(f[3])?,
                test_acc: num(f[4])?,
            })
        })
        .collect()
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<EpochRow>> {
    parse_curves_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Serialize)]
struct Summary<'a> {
    epochs: usize,
    final_metrics: &'a Metrics,
    final_confusion: &'a ConfusionMatrix,
    final_test_loss: f64,
    best_epoch: usize,
    best_metrics: &'a Metrics,
    best_confusion: &'a ConfusionMatrix,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write `curves.csv`, `metrics.json` and `confusion.txt` into `out_dir`.
pub fn emit_curves(log: &TrainLog, out_dir: &Path) -> Result<()> {
    if log.rows.is_empty() {
        return Err(Error::invalid("cannot emit curves for an empty log"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("curves.csv"), &write_curves_csv(&log.rows))?;
    let summary = Summary {
        epochs: log.rows.len(),
        final_metrics: &log.final_eval.metrics,
        final_confusion: &log.final_eval.confusion,
        final_test_loss: log.final_eval.loss,
        best_epoch: log.best_epoch,
        best_metrics: &log.best_eval.metrics,
        best_confusion: &log.best_eval.confusion,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out_dir.join("metrics.json"), &(json + "\n"))?;
    let table = format!(
        "final epoch ({}):\n{}\n\nbest epoch ({}):\n{}\n",
        log.rows.len(),
        log.final_eval.confusion,
        log.best_epoch,
        log.best_eval.confusion
    );
    write(&out_dir.join("confusion.txt"), &table)
}
