//! On-disk layout of a [`DatasetSplit`]: `split.json` for everything except
//! the samples, plus `wells/<well_id>/samples.csv` per well.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DatasetSplit, NormalizationStats, SequenceSample, SeverityClass, SplitOptions, SplitRole,
    CHANNELS, WINDOW_LEN,
};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    assignment: BTreeMap<String, SplitRole>,
    fields: BTreeMap<String, String>,
    domain_count: usize,
    domains: Vec<String>,
    stats: NormalizationStats,
    options: SplitOptions,
    sample_counts: BTreeMap<String, usize>,
}

fn samples_path(dir: &Path, well_id: &str) -> std::path::PathBuf {
    dir.join("wells").join(well_id).join("samples.csv")
}

fn role_name(role: SplitRole) -> &'static str {
    match role {
        SplitRole::Train => "train",
        SplitRole::Validation => "validation",
        SplitRole::Test => "test",
    }
}

pub fn write_split_dir(split: &DatasetSplit, dir: &Path) -> Result<()> {
    let mut per_well: BTreeMap<&str, Vec<(SplitRole, &SequenceSample)>> = BTreeMap::new();
    for well in split.assignment.keys() {
        per_well.insert(well, Vec::new());
    }
    for (role, samples) in [
        (SplitRole::Train, &split.train),
        (SplitRole::Validation, &split.validation),
        (SplitRole::Test, &split.test),
    ] {
        for s in samples {
            per_well.entry(&s.well_id).or_default().push((role, s));
        }
    }

    let mut header = String::from("split,t_start");
    for i in 0..WINDOW_LEN * CHANNELS {
        write!(header, ",f{i}").unwrap();
    }
    header.push_str(",ssi,class,domain_id\n");

    let mut sample_counts = BTreeMap::new();
    for (well, rows) in &mut per_well {
        rows.sort_by(|a, b| a.1.t_start.total_cmp(&b.1.t_start));
        let mut text = header.clone();
        for (role, s) in rows.iter() {
            write!(text, "{},{}", role_name(*role), s.t_start).unwrap();
            for v in &s.features {
                write!(text, ",{v}").unwrap();
            }
            let domain = s.domain_id.map(|d| d as i64).unwrap_or(-1);
            writeln!(text, ",{},{},{}", s.ssi, s.severity_class.number(), domain).unwrap();
        }
        let path = samples_path(dir, well);
        let parent = path.parent().unwrap();
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        sample_counts.insert(well.to_string(), rows.len());
    }

    let manifest = SplitManifest {
        assignment: split.assignment.clone(),
        fields: split.fields.clone(),
        domain_count: split.domain_count,
        domains: split.domains.clone(),
        stats: split.stats.clone(),
        options: split.options.clone(),
        sample_counts,
    };
    let path = dir.join("split.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_split_dir(dir: &Path) -> Result<DatasetSplit> {
    let path = dir.join("split.json");
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;

    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        domain_count: manifest.domain_count,
        domains: manifest.domains,
        stats: manifest.stats,
        assignment: manifest.assignment,
        fields: manifest.fields,
        options: manifest.options,
    };
    let n_features = WINDOW_LEN * CHANNELS;
    // Wells are read in domain order first so samples come back in the order
    // assemble_split produced them.
    let mut order: Vec<String> = split.domains.clone();
    for w in split.assignment.keys() {
        if !order.contains(w) {
            order.push(w.clone());
        }
    }
    for well in &order {
        let path = samples_path(dir, well);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for (row_idx, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::csv(&path, e))?;
            let bad = |what: &str| {
                Error::Input(format!("{}: row {}: bad {what}", path.display(), row_idx + 2))
            };
            if row.len() != n_features + 5 {
                return Err(bad("column count"));
            }
            let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad("number"));
            let mut features = Vec::with_capacity(n_features);
            for i in 0..n_features {
                features.push(num(2 + i)?);
            }
            let class: u8 = row[n_features + 3].parse().map_err(|_| bad("class"))?;
            let domain: i64 = row[n_features + 4].parse().map_err(|_| bad("domain_id"))?;
            let sample = SequenceSample {
                features,
                ssi: num(n_features + 2)?,
                severity_class: SeverityClass::try_from(class).map_err(|_| bad("class"))?,
                domain_id: (domain >= 0).then_some(domain as usize),
                well_id: well.clone(),
                t_start: num(1)?,
            };
            match &row[0] {
                "train" => split.train.push(sample),
                "validation" => split.validation.push(sample),
                "test" => split.test.push(sample),
                _ => return Err(bad("split")),
            }
        }
    }
    split.validate()?;
    Ok(split)
}
