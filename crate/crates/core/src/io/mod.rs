//! Run configuration, file formats and the command drivers behind the CLI.

mod commands;
mod config;
mod manifest;

pub use commands::{
    cmd_calibrate, cmd_estimate, cmd_generate_dataset, cmd_simulate, cmd_transitions, creation_timestamp, dataset_file_name,
    peaks_from_spectrum, spectrum_file_name, summary_line, CalibrateOutput, CalibrationReport, Context, ErrorRecord, EstimateOutput,
    EstimateReport,
};
pub use config::{
    DatasetSection, EstimateSection, NoiseSpec, PeakSearch, RunConfig, SimulateSection, CONFIG_SCHEMA_VERSION, SUPPORTED_FIELD_RANGE_T,
};
pub use manifest::{sha256_file, DatasetEntry, DatasetManifest, MANIFEST_FILE};
