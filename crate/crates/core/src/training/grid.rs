use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_ndtw, train, TrainConfig};
use crate::dataset::{assemble_split, DatasetSplit, SplitOptions, SplitRole};
use crate::drillsim::WellRecord;
use crate::models::ModelKind;
use crate::{Error, Result};

/// A named train/validation assignment of the development wells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCase {
    pub name: String,
    pub assignment: BTreeMap<String, SplitRole>,
}

/// The two stages of the search: regularization against the coefficient
/// at a fixed depth, then depth against the coefficient at a fixed
/// regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridStage {
    Reg,
    Arch,
}

impl fmt::Display for GridStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridStage::Reg => "reg",
            GridStage::Arch => "arch",
        })
    }
}

impl FromStr for GridStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" => Ok(GridStage::Reg),
            "arch" => Ok(GridStage::Arch),
            other => Err(Error::Config(format!("unknown grid stage `{other}` (reg, arch)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub regularization_values: Vec<f64>,
    pub hidden_layer_values: Vec<usize>,
    /// Swept for ADG.
    pub lambda_values: Vec<f64>,
    /// Swept for IRM.
    pub alpha_values: Vec<f64>,
    pub validation_cases: Vec<ValidationCase>,
    pub seeds_per_cell: usize,
    /// Depth used by the `reg` stage.
    pub fixed_hidden_layer_count: usize,
    /// Regularization used by the `arch` stage.
    pub fixed_regularization: f64,
    /// Everything not swept: kind, epochs, batch size, units, learning rate.
    pub base: TrainConfig,
    pub split_options: SplitOptions,
}

impl GridSpec {
    /// The standard search axes around `base`.
    pub fn standard_axes(base: TrainConfig, validation_cases: Vec<ValidationCase>) -> Self {
        GridSpec {
            regularization_values: vec![1e-3, 1e-4, 1e-5],
            hidden_layer_values: vec![4, 6, 8],
            lambda_values: vec![1.0, 10.0, 100.0, 1000.0],
            alpha_values: vec![0.01, 0.1, 1.0, 10.0, 1000.0],
            validation_cases,
            seeds_per_cell: 3,
            fixed_hidden_layer_count: 6,
            fixed_regularization: 1e-4,
            base,
            split_options: SplitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::Config(format!("grid axis {name} is empty"));
        if self.regularization_values.is_empty() {
            return Err(empty("regularization_values"));
        }
        if self.hidden_layer_values.is_empty() {
            return Err(empty("hidden_layer_values"));
        }
        match self.base.kind {
            ModelKind::Adg if self.lambda_values.is_empty() => return Err(empty("lambda_values")),
            ModelKind::Irm if self.alpha_values.is_empty() => return Err(empty("alpha_values")),
            _ => {}
        }
        if self.validation_cases.is_empty() {
            return Err(empty("validation_cases"));
        }
        if self.seeds_per_cell == 0 {
            return Err(Error::Config("seeds_per_cell must be positive".into()));
        }
        Ok(())
    }

    fn coefficients(&self) -> Vec<Option<f64>> {
        match self.base.kind {
            ModelKind::Baseline => vec![None],
            ModelKind::Adg => self.lambda_values.iter().map(|v| Some(*v)).collect(),
            ModelKind::Irm => self.alpha_values.iter().map(|v| Some(*v)).collect(),
        }
    }

    /// `(regularization, hidden_layer_count, coefficient)` for each cell of `stage`.
    pub fn cells(&self, stage: GridStage) -> Vec<(f64, usize, Option<f64>)> {
        let mut cells = Vec::new();
        match stage {
            GridStage::Reg => {
                for &r in &self.regularization_values {
                    for c in self.coefficients() {
                        cells.push((r, self.fixed_hidden_layer_count, c));
                    }
                }
            }
            GridStage::Arch => {
                for &h in &self.hidden_layer_values {
                    for c in self.coefficients() {
                        cells.push((self.fixed_regularization, h, c));
                    }
                }
            }
        }
        cells
    }

    fn cell_config(&self, (reg, h, coef): (f64, usize, Option<f64>)) -> TrainConfig {
        let mut c = self.base.clone();
        c.regularization_coefficient = reg;
        c.hidden_layer_count = h;
        match c.kind {
            ModelKind::Baseline => {
                c.lambda = None;
                c.alpha = None;
            }
            ModelKind::Adg => {
                c.lambda = coef;
                c.alpha = None;
            }
            ModelKind::Irm => {
                c.lambda = None;
                c.alpha = coef;
            }
        }
        c
    }
}

/// One cell of one case, or (with `case == "mean"`) the across-case mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub stage: GridStage,
    pub case: String,
    pub kind: ModelKind,
    pub regularization: f64,
    pub hidden_layer_count: usize,
    pub coefficient: Option<f64>,
    pub runs: usize,
    pub mean_validation_mse: Option<f64>,
    pub mean_ndtw: Option<f64>,
    /// `ok`, or `invalid: <reason>` when any run of the cell failed.
    pub status: String,
}

impl GridRow {
    pub fn is_valid(&self) -> bool {
        self.status == "ok"
    }
}

pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    /// Lowest across-case mean validation MSE among valid cells.
    pub argmin: Option<GridRow>,
    /// Every well that was windowed during the search.
    pub touched_wells: BTreeSet<String>,
}

struct CaseData {
    name: String,
    split: std::result::Result<DatasetSplit, String>,
}

/// Trains every cell of `stage` for every validation case and seed.
///
/// Wells assigned to `test` (or not assigned at all) in a case are never
/// read. Cells with a failed run are reported with an explicit marker
/// rather than a mean over fewer seeds.
pub fn grid_search(grid: &GridSpec, stage: GridStage, wells: &[WellRecord], workers: usize) -> Result<GridOutcome> {
    grid.validate()?;
    let mut touched = BTreeSet::new();
    let cases: Vec<CaseData> = grid
        .validation_cases
        .iter()
        .map(|case| {
            let assignment: BTreeMap<String, SplitRole> = case
                .assignment
                .iter()
                .filter(|(_, r)| **r != SplitRole::Test)
                .map(|(w, r)| (w.clone(), *r))
                .collect();
            let used: Vec<WellRecord> =
                wells.iter().filter(|w| assignment.contains_key(&w.well_id)).cloned().collect();
            let split = if used.len() != assignment.len() {
                Err(format!("case names {} wells but {} were supplied", assignment.len(), used.len()))
            } else {
                touched.extend(used.iter().map(|w| w.well_id.clone()));
                assemble_split(&used, &assignment, &grid.split_options)
                    .map_err(|e| e.to_string())
                    .and_then(|s| {
                        if s.validation.is_empty() {
                            Err("case has no validation samples".to_string())
                        } else {
                            Ok(s)
                        }
                    })
            };
            CaseData { name: case.name.clone(), split }
        })
        .collect();

    let cells = grid.cells(stage);
    let mut jobs = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        if case.split.is_err() {
            continue;
        }
        for (k, _) in cells.iter().enumerate() {
            for seed in 0..grid.seeds_per_cell as u64 {
                jobs.push((ci, k, seed));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<std::result::Result<(f64, f64), String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, k, seed)| {
                let split = cases[ci].split.as_ref().expect("feasible case");
                let config = grid.cell_config(cells[k]);
                let run = || -> Result<(f64, f64)> {
                    let outcome = train(&config, split, seed)?;
                    let mse = outcome
                        .best_validation_mse
                        .ok_or_else(|| Error::InsufficientData("no validation score".into()))?;
                    Ok((mse, mean_ndtw(&outcome.bundle, &split.validation)?))
                };
                run().map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut by_cell: BTreeMap<(usize, usize), Vec<&std::result::Result<(f64, f64), String>>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(&results) {
        by_cell.entry((job.0, job.1)).or_default().push(res);
    }

    let row = |case: &str, cell: (f64, usize, Option<f64>)| GridRow {
        stage,
        case: case.to_string(),
        kind: grid.base.kind,
        regularization: cell.0,
        hidden_layer_count: cell.1,
        coefficient: cell.2,
        runs: 0,
        mean_validation_mse: None,
        mean_ndtw: None,
        status: "ok".into(),
    };

    let mut rows = Vec::new();
    let mut per_cell_cases: Vec<Vec<GridRow>> = vec![Vec::new(); cells.len()];
    for (ci, case) in cases.iter().enumerate() {
        for (k, &cell) in cells.iter().enumerate() {
            let mut r = row(&case.name, cell);
            match &case.split {
                Err(reason) => r.status = format!("invalid: {reason}"),
                Ok(_) => {
                    let runs = &by_cell[&(ci, k)];
                    let ok: Vec<(f64, f64)> = runs.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
                    r.runs = ok.len();
                    if ok.len() == grid.seeds_per_cell {
                        let n = ok.len() as f64;
                        r.mean_validation_mse = Some(ok.iter().map(|v| v.0).sum::<f64>() / n);
                        r.mean_ndtw = Some(ok.iter().map(|v| v.1).sum::<f64>() / n);
                    } else {
                        let first = runs.iter().find_map(|r| r.as_ref().err()).cloned().unwrap_or_default();
                        r.status = format!(
                            "invalid: {} of {} runs failed ({first})",
                            grid.seeds_per_cell - ok.len(),
                            grid.seeds_per_cell
                        );
                    }
                }
            }
            per_cell_cases[k].push(r.clone());
            rows.push(r);
        }
    }

    let mut argmin: Option<GridRow> = None;
    for (k, &cell) in cells.iter().enumerate() {
        let mut r = row("mean", cell);
        let case_rows = &per_cell_cases[k];
        if let Some(bad) = case_rows.iter().find(|c| !c.is_valid()) {
            r.status = format!("invalid: case {} is invalid", bad.case);
        } else {
            let n = case_rows.len() as f64;
            r.runs = case_rows.iter().map(|c| c.runs).sum();
            r.mean_validation_mse = Some(case_rows.iter().filter_map(|c| c.mean_validation_mse).sum::<f64>() / n);
            r.mean_ndtw = Some(case_rows.iter().filter_map(|c| c.mean_ndtw).sum::<f64>() / n);
            if argmin
                .as_ref()
                .is_none_or(|a| r.mean_validation_mse.unwrap() < a.mean_validation_mse.unwrap())
            {
                argmin = Some(r.clone());
            }
        }
        rows.push(r);
    }

    Ok(GridOutcome { rows, argmin, touched_wells: touched })
}
