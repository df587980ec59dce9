//! The `stickslip` command line.
//!
//! Every command reads JSON/CSV inputs and writes its artifacts into a
//! directory; nothing is read from the environment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{self, BenchmarkConfig};
use crate::dataset::{
    assemble_split, bin_prediction, read_split_dir, write_split_dir, DatasetSplit, SequenceSample, SeverityClass,
    SplitOptions, SplitRole,
};
use crate::drillsim::{read_record_csv, read_spec_json, simulate_well, write_record_csv, write_spec_json, WellRecord};
use crate::metrics::{evaluate_predictions, read_json, severe_recall, write_json, write_predictions_csv};
use crate::models::ModelKind;
use crate::report::write_run_report;
use crate::training::{
    grid_search, read_grid_results, samples_by_well, train, write_grid_results, write_training_log, EvalFile,
    GridSpec, GridStage, RunDir, TrainConfig,
};
use crate::transfer::{evaluate_transfer, fine_tune, write_transfer_report, FineTuneConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "stickslip", version, about = "Stick-slip index regression with domain generalization")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the standard benchmark: well specs, split assignments and desk configs.
    Specs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = BenchmarkConfig::default().seed)]
        seed: u64,
    },
    /// Simulate every well spec in a directory.
    Simulate {
        #[arg(long)]
        spec_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window, label and normalize simulated wells into a split directory.
    Prepare {
        #[arg(long)]
        wells: PathBuf,
        /// JSON map from well id to train, validation or test.
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hold out this chronological tail of every training well for validation.
        #[arg(long)]
        tail_fraction: Option<f64>,
        /// Give validation wells domain labels too.
        #[arg(long)]
        validation_domains: bool,
    },
    /// Train one model and keep the best-validation checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one stage of the two-stage hyperparameter search.
    Gridsearch {
        #[arg(long)]
        wells: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        stage: GridStage,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Predict the test wells of a split with a trained run.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Fine-tune a trained run on the head of every test well.
    Transfer {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fine-tuning settings as JSON; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render SVG charts and report.json for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// One simulated well in `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub well_id: String,
    pub field_id: String,
    pub file: String,
    pub samples: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub wells: Vec<ManifestEntry>,
}

/// 0 on success, 3 for numerical failures, 2 for everything else.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_numerical() => 3,
        Err(_) => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Specs { out, seed } => specs(&out, seed),
        Command::Simulate { spec_dir, out } => simulate(&spec_dir, &out),
        Command::Prepare { wells, assignment, out, tail_fraction, validation_domains } => prepare(
            &wells,
            &assignment,
            &out,
            &SplitOptions { validation_domains, validation_tail_fraction: tail_fraction },
        ),
        Command::Train { data, config, run, seed } => train_cmd(&data, &config, &RunDir::new(run), seed),
        Command::Gridsearch { wells, grid, stage, run, workers } => {
            gridsearch(&wells, &grid, stage, &RunDir::new(run), workers)
        }
        Command::Evaluate { run, data } => evaluate(&RunDir::new(run), &data),
        Command::Transfer { run, data, config, seed } => transfer(&RunDir::new(run), &data, config.as_deref(), seed),
        Command::Report { run } => {
            let report = write_run_report(&RunDir::new(&run))?;
            for chart in &report.charts {
                println!("{}", run.join(chart).display());
            }
            println!("{}", RunDir::new(&run).report_path().display());
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(dir.to_path_buf()))
    }
}

fn specs(out: &Path, seed: u64) -> Result<()> {
    let config = BenchmarkConfig { seed, ..BenchmarkConfig::default() };
    let spec_dir = out.join("specs");
    create_dir(&spec_dir)?;
    for spec in benchmark::standard_specs(&config) {
        write_spec_json(&spec, &spec_dir.join(format!("{}.json", spec.well_id)))?;
    }
    write_json(&benchmark::final_assignment(), &out.join("final_assignment.json"))?;
    let mut cases = Vec::new();
    for case in benchmark::validation_cases() {
        write_json(&case.assignment, &out.join(format!("{}_assignment.json", case.name)))?;
        cases.push(case);
    }
    for kind in ModelKind::ALL {
        let config = benchmark::desk_config(kind);
        write_json(&config, &out.join(format!("train_{kind}.json")))?;
        write_json(&GridSpec::standard_axes(config, cases.clone()), &out.join(format!("grid_{kind}.json")))?;
    }
    write_json(&benchmark::desk_fine_tune(0), &out.join("fine_tune.json"))?;
    println!("wrote benchmark specs and configs to {}", out.display());
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    require_dir(dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn simulate(spec_dir: &Path, out: &Path) -> Result<()> {
    let files = json_files(spec_dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no well spec JSON files in {}", spec_dir.display())));
    }
    let specs = files.iter().map(|path| read_spec_json(path)).collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    let mut wells = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("simulating {}", spec.well_id);
        let record = simulate_well(spec)?;
        let file = format!("{}.csv", spec.well_id);
        let path = out.join(&file);
        write_record_csv(&record, &path)?;
        wells.push(ManifestEntry {
            well_id: spec.well_id.clone(),
            field_id: spec.field_id.clone(),
            file,
            samples: record.len(),
            sha256: sha256_file(&path)?,
        });
        println!("{}: {} s", spec.well_id, record.len());
    }
    write_json(&SimulationManifest { wells }, &out.join(MANIFEST_FILE))
}

fn load_wells(dir: &Path, only: Option<&BTreeMap<String, SplitRole>>) -> Result<Vec<WellRecord>> {
    let manifest: SimulationManifest = read_json(&dir.join(MANIFEST_FILE))?;
    manifest
        .wells
        .iter()
        .filter(|w| only.is_none_or(|a| a.contains_key(&w.well_id)))
        .map(|w| read_record_csv(&dir.join(&w.file), &w.well_id, &w.field_id))
        .collect()
}

fn histogram(samples: &[SequenceSample]) -> [usize; 4] {
    let mut h = [0; 4];
    for s in samples {
        h[s.severity_class.index()] += 1;
    }
    h
}

fn prepare(wells: &Path, assignment: &Path, out: &Path, options: &SplitOptions) -> Result<()> {
    let assignment: BTreeMap<String, SplitRole> = read_json(assignment)?;
    let records = load_wells(wells, Some(&assignment))?;
    if let Some(missing) = assignment.keys().find(|w| !records.iter().any(|r| &r.well_id == *w)) {
        return Err(Error::Config(format!("assignment names {missing}, which is not in {}", wells.display())));
    }
    let split = assemble_split(&records, &assignment, options)?;
    create_dir(out)?;
    write_split_dir(&split, out)?;
    println!("role        class1 class2 class3 class4  total");
    for (name, samples) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let h = histogram(samples);
        println!("{name:<10} {:>7} {:>6} {:>6} {:>6} {:>6}", h[0], h[1], h[2], h[3], samples.len());
    }
    Ok(())
}

fn load_split(dir: &Path) -> Result<DatasetSplit> {
    require_dir(dir)?;
    read_split_dir(dir)
}

fn train_cmd(data: &Path, config: &Path, run: &RunDir, seed: u64) -> Result<()> {
    let config: TrainConfig = read_json(config)?;
    config.validate()?;
    let split = load_split(data)?;
    let outcome = train(&config, &split, seed)?;
    run.create()?;
    run.write_config(&config)?;
    run.save_bundle(&outcome.bundle)?;
    write_training_log(&outcome.log, &run.training_log_path())?;
    match outcome.best_validation_mse {
        Some(mse) => println!("{} seed {seed}: best epoch {} validation MSE {mse:.6}", config.kind, outcome.best_epoch),
        None => println!("{} seed {seed}: trained {} epochs", config.kind, outcome.best_epoch),
    }
    Ok(())
}

fn gridsearch(wells: &Path, grid: &Path, stage: GridStage, run: &RunDir, workers: usize) -> Result<()> {
    let mut spec: GridSpec = read_json(grid)?;
    let mut rows = Vec::new();
    if run.grid_results_path().exists() {
        rows = read_grid_results(&run.grid_results_path())?;
        rows.retain(|r| r.stage != stage);
    }
    if stage == GridStage::Arch {
        let best_reg = rows
            .iter()
            .filter(|r| r.stage == GridStage::Reg && r.case == "mean" && r.is_valid())
            .min_by(|a, b| a.mean_validation_mse.partial_cmp(&b.mean_validation_mse).expect("finite grid means"));
        if let Some(best) = best_reg {
            log::info!("arch stage uses regularization {} from the reg stage", best.regularization);
            spec.fixed_regularization = best.regularization;
        }
    }
    let assignment: BTreeMap<String, SplitRole> = spec
        .validation_cases
        .iter()
        .flat_map(|c| c.assignment.iter().filter(|(_, r)| **r != SplitRole::Test))
        .map(|(w, r)| (w.clone(), *r))
        .collect();
    let records = load_wells(wells, Some(&assignment))?;
    let outcome = grid_search(&spec, stage, &records, workers)?;
    run.create()?;
    rows.extend(outcome.rows);
    write_grid_results(&rows, &run.grid_results_path())?;
    match outcome.argmin {
        Some(best) => println!(
            "{stage} argmin: regularization {} hidden layers {} coefficient {:?} mean validation MSE {:.6}",
            best.regularization,
            best.hidden_layer_count,
            best.coefficient,
            best.mean_validation_mse.unwrap_or(f64::NAN)
        ),
        None => println!("{stage}: no valid cell"),
    }
    Ok(())
}

fn evaluate(run: &RunDir, data: &Path) -> Result<()> {
    let bundle = run.load_bundle()?;
    let split = load_split(data)?;
    if split.test.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no test samples", data.display())));
    }
    let preds = bundle.predict(&split.test)?;
    let (wells, rows) = evaluate_predictions(&split.test, &preds)?;
    let truth: Vec<SeverityClass> = split.test.iter().map(|s| s.severity_class).collect();
    let pred: Vec<SeverityClass> = preds.iter().map(|&p| bin_prediction(p)).collect();
    let file = EvalFile {
        kind: bundle.kind(),
        mean_ndtw: wells.iter().map(|w| w.ndtw).sum::<f64>() / wells.len() as f64,
        severe_recall: severe_recall(&truth, &pred),
        wells,
    };
    write_predictions_csv(&rows, &run.predictions_path())?;
    write_json(&file, &run.eval_report_path())?;
    for w in &file.wells {
        println!("{}: normalized DTW {:.4} MSE {:.4}", w.well, w.ndtw, w.mse);
    }
    Ok(())
}

fn transfer(run: &RunDir, data: &Path, config: Option<&Path>, seed: u64) -> Result<()> {
    let mut config = match config {
        Some(path) => read_json::<FineTuneConfig>(path)?,
        None => FineTuneConfig::default(),
    };
    config.seed = seed;
    let bundle = run.load_bundle()?;
    let split = load_split(data)?;
    if split.test.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no test samples", data.display())));
    }
    let mut rows = Vec::new();
    for (well, samples) in samples_by_well(&split.test) {
        let outcome = fine_tune(&bundle, &samples, &config)?;
        if outcome.frozen_checksum_before != outcome.frozen_checksum_after {
            return Err(Error::Domain(format!("frozen parameters changed while fine-tuning on {well}")));
        }
        let row = evaluate_transfer(&bundle, &outcome.bundle, &samples, config.fraction)?;
        println!(
            "{well}: normalized DTW {:.4} -> {:.4} ({:.2}%)",
            row.dtw_pre, row.dtw_post, row.improvement_pct
        );
        rows.push(row);
    }
    write_transfer_report(&rows, &run.transfer_report_path())
}
