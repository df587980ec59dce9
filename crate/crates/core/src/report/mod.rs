//! Standalone SVG charts and the `report.json` summary of a run directory.

mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use svg::{bar_chart, line_chart, Series};

use crate::metrics::{read_json, read_predictions_csv, write_json, PredictionRow};
use crate::training::{read_grid_results, read_training_log, EvalFile, GridRow, GridStage, LogRow, RunDir};
use crate::{Error, Result};

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Option<usize>,
    pub best_epoch: Option<usize>,
    pub best_validation_mse: Option<f64>,
    pub evaluation: Option<EvalFile>,
    /// Lowest across-case mean validation MSE, one row per grid stage.
    pub grid_argmin: Vec<GridRow>,
    /// File names of the charts written next to the report.
    pub charts: Vec<String>,
}

fn loss_chart(log: &[LogRow]) -> String {
    let pick = |split: &str| -> (Vec<f64>, Vec<f64>) {
        log.iter().filter(|r| r.split == split).map(|r| (r.epoch as f64, r.ssi_mse)).unzip()
    };
    let (x_train, train) = pick("train");
    let (x_val, val) = pick("validation");
    let mut series = vec![Series { label: "train SSI MSE".into(), x: x_train, y: train }];
    if !val.is_empty() {
        series.push(Series { label: "validation SSI MSE".into(), x: x_val, y: val });
    }
    line_chart("Training curve", "epoch", "MSE", &series)
}

fn best_validation(log: &[LogRow]) -> Option<(usize, f64)> {
    log.iter()
        .filter(|r| r.split == "validation")
        .fold(None, |best: Option<(usize, f64)>, r| match best {
            Some((_, m)) if m <= r.ssi_mse => best,
            _ => Some((r.epoch, r.ssi_mse)),
        })
}

fn prediction_charts(rows: &[PredictionRow]) -> BTreeMap<String, String> {
    let mut by_well: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        by_well.entry(&r.well).or_default().push(r);
    }
    by_well
        .into_iter()
        .map(|(well, rows)| {
            let x: Vec<f64> = rows.iter().map(|r| r.t_start).collect();
            let series = [
                Series { label: "true SSI".into(), x: x.clone(), y: rows.iter().map(|r| r.true_ssi).collect() },
                Series { label: "predicted SSI".into(), x, y: rows.iter().map(|r| r.pred_ssi).collect() },
            ];
            (well.to_string(), line_chart(&format!("SSI on {well}"), "time (s)", "SSI", &series))
        })
        .collect()
}

fn grid_chart(rows: &[GridRow]) -> Option<String> {
    let bars: Vec<(String, Option<f64>)> = rows
        .iter()
        .filter(|r| r.case == "mean")
        .map(|r| {
            let mut label = format!("reg {:e} h {}", r.regularization, r.hidden_layer_count);
            if let Some(c) = r.coefficient {
                label.push_str(&format!(" c {c}"));
            }
            (label, r.mean_validation_mse)
        })
        .collect();
    (!bars.is_empty()).then(|| bar_chart("Grid search: mean validation MSE across cases", "MSE", &bars))
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::MissingArtifact(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Renders every chart the run directory has inputs for and writes
/// `report.json`. Fails with a missing-artifact error naming the training
/// log when the directory holds none of the known artifacts.
pub fn write_run_report(run: &RunDir) -> Result<RunReport> {
    let log = optional(read_training_log(&run.training_log_path()))?;
    let predictions = optional(read_predictions_csv(&run.predictions_path()))?;
    let evaluation: Option<EvalFile> = optional(read_json(&run.eval_report_path()))?;
    let grid = optional(read_grid_results(&run.grid_results_path()))?;
    if log.is_none() && predictions.is_none() && evaluation.is_none() && grid.is_none() {
        return Err(Error::MissingArtifact(run.training_log_path()));
    }

    let mut charts = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        write_text(&run.root.join(&name), &svg)?;
        charts.push(name);
        Ok(())
    };
    if let Some(log) = &log {
        emit("training_curve.svg".into(), loss_chart(log))?;
    }
    if let Some(rows) = &predictions {
        for (well, svg) in prediction_charts(rows) {
            emit(format!("ssi_{well}.svg"), svg)?;
        }
    }
    let mut grid_argmin = Vec::new();
    if let Some(rows) = &grid {
        if let Some(svg) = grid_chart(rows) {
            emit("grid_means.svg".into(), svg)?;
        }
        for stage in [GridStage::Reg, GridStage::Arch] {
            let best = rows
                .iter()
                .filter(|r| r.stage == stage && r.case == "mean" && r.is_valid())
                .min_by(|a, b| a.mean_validation_mse.partial_cmp(&b.mean_validation_mse).expect("finite grid means"));
            grid_argmin.extend(best.cloned());
        }
    }

    let best = log.as_deref().and_then(best_validation);
    let report = RunReport {
        epochs: log.as_ref().and_then(|l| l.iter().map(|r| r.epoch).max()),
        best_epoch: best.map(|b| b.0),
        best_validation_mse: best.map(|b| b.1),
        evaluation,
        grid_argmin,
        charts,
    };
    write_json(&report, &run.report_path())?;
    Ok(report)
}
