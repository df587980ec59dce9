use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{window_well, NormalizationStats, SequenceSample};
use crate::drillsim::WellRecord;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Also give validation wells their own domain labels, so the domain
    /// count covers training and validation wells.
    pub validation_domains: bool,
    /// Move the chronological tail of each training well into validation.
    pub validation_tail_fraction: Option<f64>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            validation_domains: false,
            validation_tail_fraction: None,
        }
    }
}

/// Domain-tagged train/validation/test samples plus the normalization they
/// were built with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SequenceSample>,
    pub validation: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    /// Number of labelled source domains.
    pub domain_count: usize,
    /// `domains[id]` is the well behind domain `id`.
    pub domains: Vec<String>,
    pub stats: NormalizationStats,
    pub assignment: BTreeMap<String, SplitRole>,
    pub fields: BTreeMap<String, String>,
    pub options: SplitOptions,
}

impl DatasetSplit {
    /// Well ids assigned to `role`, sorted by id.
    pub fn wells_in(&self, role: SplitRole) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(w, _)| w.clone())
            .collect()
    }

    /// Checks the split-hygiene invariants.
    pub fn validate(&self) -> Result<()> {
        check_field_consistency(&self.assignment, &self.fields)?;
        let all = self.train.iter().chain(&self.validation).chain(&self.test);
        for s in all {
            if let Some(d) = s.domain_id {
                if d >= self.domain_count {
                    return Err(Error::Input(format!(
                        "sample of {} has domain {d} >= {}",
                        s.well_id, self.domain_count
                    )));
                }
            }
        }
        let test_wells: BTreeSet<&str> = self.test.iter().map(|s| s.well_id.as_str()).collect();
        if self
            .train
            .iter()
            .chain(&self.validation)
            .any(|s| test_wells.contains(s.well_id.as_str()))
        {
            return Err(Error::Input("a test well also appears in train/validation".into()));
        }
        Ok(())
    }
}

fn check_field_consistency(
    assignment: &BTreeMap<String, SplitRole>,
    fields: &BTreeMap<String, String>,
) -> Result<()> {
    let mut by_field: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for (well, role) in assignment {
        let field = fields
            .get(well)
            .ok_or_else(|| Error::Config(format!("no field known for well {well}")))?;
        let entry = by_field.entry(field.as_str()).or_default();
        match role {
            SplitRole::Test => entry.1 = true,
            _ => entry.0 = true,
        }
    }
    for (field, (fit, test)) in by_field {
        if fit && test {
            return Err(Error::Config(format!(
                "field {field} has wells in both training/validation and test"
            )));
        }
    }
    Ok(())
}

/// Windows every well, fits normalization on the training wells and tags
/// samples with dense domain ids.
///
/// Domain ids follow the order of `wells`: training wells first, then (with
/// `validation_domains`) validation wells.
pub fn assemble_split(
    wells: &[WellRecord],
    assignment: &BTreeMap<String, SplitRole>,
    options: &SplitOptions,
) -> Result<DatasetSplit> {
    let mut fields = BTreeMap::new();
    for w in wells {
        w.validate()?;
        if fields.insert(w.well_id.clone(), w.field_id.clone()).is_some() {
            return Err(Error::Config(format!("duplicate well id {}", w.well_id)));
        }
        if !assignment.contains_key(&w.well_id) {
            return Err(Error::Config(format!("well {} has no assignment", w.well_id)));
        }
    }
    for well in assignment.keys() {
        if !fields.contains_key(well) {
            return Err(Error::Config(format!("assignment names unknown well {well}")));
        }
    }
    check_field_consistency(assignment, &fields)?;
    if let Some(f) = options.validation_tail_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "validation_tail_fraction {f} outside (0, 1)"
            )));
        }
    }

    let role_of = |w: &WellRecord| assignment[&w.well_id];
    let train_records: Vec<&WellRecord> = wells
        .iter()
        .filter(|w| role_of(w) == SplitRole::Train)
        .collect();
    if train_records.is_empty() {
        return Err(Error::Config("no training wells assigned".into()));
    }
    let stats = NormalizationStats::fit(&train_records)?;

    let mut domains = Vec::new();
    for w in &train_records {
        domains.push(w.well_id.clone());
    }
    if options.validation_domains {
        for w in wells.iter().filter(|w| role_of(w) == SplitRole::Validation) {
            domains.push(w.well_id.clone());
        }
    }

    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        domain_count: domains.len(),
        domains: domains.clone(),
        stats,
        assignment: assignment.clone(),
        fields,
        options: options.clone(),
    };

    for well in wells {
        let role = role_of(well);
        let domain_id = domains.iter().position(|d| *d == well.well_id);
        let mut samples = window_well(well, &split.stats).samples;
        for s in &mut samples {
            s.domain_id = domain_id;
        }
        match role {
            SplitRole::Train => {
                if let Some(frac) = options.validation_tail_fraction {
                    let hold = ((samples.len() as f64) * frac).ceil() as usize;
                    let cut = samples.len() - hold.min(samples.len());
                    let tail = samples.split_off(cut);
                    split.validation.extend(tail);
                }
                split.train.extend(samples);
            }
            SplitRole::Validation => split.validation.extend(samples),
            SplitRole::Test => split.test.extend(samples),
        }
    }
    split.validate()?;
    Ok(split)
}
