//! Frequency calibration of raw scans and line-center extraction.

mod axis;
mod extract;
mod filter;
mod fit;
mod peaks;
mod synth;
mod trace;

pub use axis::{build_frequency_axis, sigma_calib_from_markers, FrequencyAxis};
pub use extract::{extract_peaks, find_peaks, format_label, parse_label, PeakEntry, PeakList, PeakStatus, TransitionLabel};
pub use filter::savitzky_golay;
pub use fit::{fit_pair, fit_peak, PeakFit, ProfileKind};
pub use peaks::{detect_etalon_peaks, parabolic_subpixel, Subpixel};
pub use synth::{ScanSpec, SyntheticScan};
pub use trace::{calibrate, AnchorSpec, Calibration, CalibrationSettings, RawTrace, SigmaCalibSource, MAX_TIME_JITTER, MIN_SAMPLES};
