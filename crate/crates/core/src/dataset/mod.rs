//! Windowing, labelling and splitting of well records.

mod io;
mod split;
mod ssi;
mod window;

pub use io::{read_split_dir, write_split_dir};
pub use split::{assemble_split, DatasetSplit, SplitOptions, SplitRole};
pub use ssi::{bin_prediction, bin_ssi, compute_ssi, SeverityClass, SSI_MEAN_TOLERANCE};
pub use window::{window_well, NormalizationStats, SequenceSample, WindowedWell};

/// Samples per window (seconds at 1 Hz).
pub const WINDOW_LEN: usize = 60;
/// Surface channels per timestep: torque, WOB, ROP, flow, total rotation speed.
pub const CHANNELS: usize = 5;
pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "surface_torque",
    "surface_wob",
    "rop",
    "flow_rate",
    "total_rotation_speed",
];
