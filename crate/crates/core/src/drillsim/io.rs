use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{WellRecord, WellSpec};
use crate::{Error, Result};

pub const RECORD_CSV_HEADER: &str =
    "t,surface_torque,surface_wob,rop,flow_rate,total_rotation_speed,bit_speed";

pub fn write_record_csv(record: &WellRecord, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{RECORD_CSV_HEADER}")?;
        for i in 0..record.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                record.start_s + i as f64,
                record.surface_torque[i],
                record.surface_wob[i],
                record.rop[i],
                record.flow_rate[i],
                record.total_rotation_speed[i],
                record.bit_speed[i]
            )?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads a record written by [`write_record_csv`]. Identity fields are not
/// part of the CSV and are supplied by the caller.
pub fn read_record_csv(path: &Path, well_id: &str, field_id: &str) -> Result<WellRecord> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected: Vec<&str> = RECORD_CSV_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Input(format!(
            "{}: unexpected header, want `{RECORD_CSV_HEADER}`",
            path.display()
        )));
    }
    let mut record = WellRecord {
        well_id: well_id.to_string(),
        field_id: field_id.to_string(),
        sample_rate_hz: 1.0,
        start_s: 0.0,
        surface_torque: Vec::new(),
        surface_wob: Vec::new(),
        rop: Vec::new(),
        flow_rate: Vec::new(),
        total_rotation_speed: Vec::new(),
        bit_speed: Vec::new(),
    };
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let mut values = [0.0; 7];
        for (col, slot) in values.iter_mut().enumerate() {
            let raw = row.get(col).unwrap_or("");
            *slot = raw.parse().map_err(|_| {
                Error::Input(format!(
                    "{}: row {}: column `{}` is not a number: `{raw}`",
                    path.display(),
                    row_idx + 2,
                    expected[col]
                ))
            })?;
        }
        if row_idx == 0 {
            record.start_s = values[0];
        }
        record.surface_torque.push(values[1]);
        record.surface_wob.push(values[2]);
        record.rop.push(values[3]);
        record.flow_rate.push(values[4]);
        record.total_rotation_speed.push(values[5]);
        record.bit_speed.push(values[6]);
    }
    record.validate()?;
    Ok(record)
}

pub fn write_spec_json(spec: &WellSpec, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_spec_json(path: &Path) -> Result<WellSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: WellSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    spec.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drillsim::{simulate_well, ChannelNoise, Schedule, Trajectory};

    #[test]
    fn csv_round_trip_is_lossless() {
        let spec = WellSpec {
            well_id: "w1".into(),
            field_id: "f1".into(),
            trajectory: Trajectory::Lateral,
            duration_s: 120.0,
            string_stiffness: 470.0,
            string_damping: 80.0,
            bit_inertia: 400.0,
            static_friction_torque: 11_000.0,
            kinetic_friction_torque: 9_000.0,
            velocity_weakening_rate: 0.5,
            bit_torque_fluctuation: 900.0,
            surface_speed_profile: Schedule::constant(7.0),
            wob_profile: Schedule::constant(120.0),
            flow_profile: Schedule::constant(1800.0),
            torque_gain: 1.2,
            torque_offset: 300.0,
            noise_std: ChannelNoise { torque: 40.0, wob: 1.0, rop: 0.3, flow: 5.0, rotation: 0.02 },
            seed: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        let rec = simulate_well(&spec).unwrap();
        let path = dir.path().join("w1.csv");
        write_record_csv(&rec, &path).unwrap();
        let back = read_record_csv(&path, "w1", "f1").unwrap();
        assert_eq!(back, rec);

        let spec_path = dir.path().join("w1.json");
        write_spec_json(&spec, &spec_path).unwrap();
        assert_eq!(read_spec_json(&spec_path).unwrap(), spec);
    }
}
