use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridRow, LogRow, TrainConfig};
use crate::metrics::{read_json, write_json, WellEval};
use crate::models::{ModelBundle, ModelKind};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const GRID_RESULTS_FILE: &str = "grid_results.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const TRANSFER_REPORT_FILE: &str = "transfer_report.csv";

/// Contents of `eval_report.json` for one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub kind: ModelKind,
    pub wells: Vec<WellEval>,
    pub mean_ndtw: f64,
    /// Class-4 recall over every evaluated sequence.
    pub severe_recall: Option<f64>,
}

pub fn write_training_log(rows: &[LogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_training_log(path: &Path) -> Result<Vec<LogRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

pub fn write_grid_results(rows: &[GridRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_grid_results(path: &Path) -> Result<Vec<GridRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// `runs/<name>/` with its fixed file layout.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join(CHECKPOINT_DIR)
    }

    pub fn training_log_path(&self) -> PathBuf {
        self.root.join(TRAINING_LOG_FILE)
    }

    pub fn grid_results_path(&self) -> PathBuf {
        self.root.join(GRID_RESULTS_FILE)
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join(REPORT_FILE)
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.root.join(PREDICTIONS_FILE)
    }

    pub fn eval_report_path(&self) -> PathBuf {
        self.root.join(EVAL_REPORT_FILE)
    }

    pub fn transfer_report_path(&self) -> PathBuf {
        self.root.join(TRANSFER_REPORT_FILE)
    }

    pub fn write_config(&self, config: &TrainConfig) -> Result<()> {
        write_json(config, &self.config_path())
    }

    pub fn read_config(&self) -> Result<TrainConfig> {
        read_json(&self.config_path())
    }

    pub fn save_bundle(&self, bundle: &ModelBundle) -> Result<()> {
        bundle.save(&self.checkpoint_dir())
    }

    pub fn load_bundle(&self) -> Result<ModelBundle> {
        let dir = self.checkpoint_dir();
        if !dir.exists() {
            return Err(Error::MissingArtifact(dir));
        }
        ModelBundle::load(&dir)
    }
}
