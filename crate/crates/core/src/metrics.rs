//! CSV records of training runs and learning-rate sweeps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::{EpochMetrics, SweepRecord};

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy,wall_seconds";
pub const SWEEP_HEADER: &str = "lr,smoothed_loss";

pub fn metrics_csv(records: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.wall_seconds
        ));
    }
    out
}

pub fn write_metrics_csv(records: &[EpochMetrics], path: &Path) -> Result<()> {
    fs::write(path, metrics_csv(records))?;
    Ok(())
}

fn parse_rows(text: &str, header: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::format(0, format!("expected header `{header}`")));
    }
    let mut offset = header.len() + 1;
    let mut rows = Vec::new();
    for line in lines {
        let fields = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(offset, format!("bad number in `{line}`: {e}")))?;
        if fields.len() != columns {
            return Err(Error::format(offset, format!("expected {columns} columns in `{line}`")));
        }
        rows.push(fields);
        offset += line.len() + 1;
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path)?;
    Ok(parse_rows(&text, METRICS_HEADER, 5)?
        .into_iter()
        .map(|r| EpochMetrics {
            epoch: r[0] as usize,
            train_loss: r[1],
            val_loss: r[2],
            val_accuracy: r[3],
            wall_seconds: r[4],
            skipped_steps: 0,
        })
        .collect())
}

/// Learning rates span many decades, so they are written in scientific
/// notation with six decimals; losses use fixed six decimals.
pub fn sweep_csv(record: &SweepRecord) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in &record.points {
        out.push_str(&format!("{:.6e},{:.6}\n", p.lr, p.smoothed));
    }
    out
}

pub fn write_sweep_csv(record: &SweepRecord, path: &Path) -> Result<()> {
    fs::write(path, sweep_csv(record))?;
    Ok(())
}

/// `(lr, smoothed_loss)` pairs.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    Ok(parse_rows(&text, SWEEP_HEADER, 2)?.into_iter().map(|r| (r[0], r[1])).collect())
}
