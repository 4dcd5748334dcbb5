use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{CalibrationSettings, ProfileKind};
use crate::atomic::AtomicConstants;
use crate::error::{Error, Result};
use crate::estimator::{DEFAULT_GATE_MHZ, FIELD_TOLERANCE_T};
use crate::obe::OBEParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Top-level run configuration. Every numeric key names its unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Atomic constants TOML; the shipped Rb-87 D2 set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obe: Option<OBEParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peaks: Option<PeakSearch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSection>,
    /// Directory the relative paths above are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub fields_t: Vec<f64>,
}

/// How line centers are pulled out of a spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSearch {
    /// Nominal field whose transition table seeds the fit windows. Without
    /// it every prominent maximum is fitted and left unassigned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_t: Option<f64>,
    #[serde(default = "default_half_width")]
    pub search_half_width_mhz: f64,
    #[serde(default = "default_kind")]
    pub profile: ProfileKind,
    /// Fraction of the signal range, used without field_t.
    #[serde(default = "default_peak_prominence")]
    pub min_prominence: f64,
}

fn default_half_width() -> f64 {
    150.0
}
fn default_kind() -> ProfileKind {
    ProfileKind::Gaussian
}
fn default_peak_prominence() -> f64 {
    0.05
}

impl Default for PeakSearch {
    fn default() -> Self {
        PeakSearch {
            field_t: None,
            search_half_width_mhz: default_half_width(),
            profile: default_kind(),
            min_prominence: default_peak_prominence(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub bounds_t: [f64; 2],
    /// Overrides the value suggested by a calibration report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_calib_mhz: Option<f64>,
    /// Diagnostics file written by `calibrate`; supplies σ_calib.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_report: Option<PathBuf>,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_gate")]
    pub gate_mhz: f64,
    /// Field for assigning unlabeled peaks; scanned over the bounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_guess_t: Option<f64>,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_time_s: Option<f64>,
}

fn default_n_mc() -> usize {
    1000
}
fn default_gate() -> f64 {
    DEFAULT_GATE_MHZ
}
fn default_tolerance() -> f64 {
    FIELD_TOLERANCE_T
}

impl EstimateSection {
    pub fn new(bounds_t: [f64; 2]) -> Self {
        EstimateSection {
            bounds_t,
            sigma_calib_mhz: None,
            calibration_report: None,
            n_mc: default_n_mc(),
            gate_mhz: default_gate(),
            b_guess_t: None,
            weighted: false,
            tolerance_t: default_tolerance(),
            measurement_time_s: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Additive white noise, standard deviation relative to the normalized peak.
    #[serde(default)]
    pub white_noise_rms: f64,
    /// Standard deviation of a per-spectrum detuning-axis offset.
    #[serde(default)]
    pub axis_jitter_mhz: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.white_noise_rms >= 0.0 && self.white_noise_rms.is_finite()) {
            return Err(Error::Config(format!("white_noise_rms must be >= 0, got {}", self.white_noise_rms)));
        }
        if !(self.axis_jitter_mhz >= 0.0 && self.axis_jitter_mhz.is_finite()) {
            return Err(Error::Config(format!("axis_jitter_mhz must be >= 0, got {}", self.axis_jitter_mhz)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.white_noise_rms == 0.0 && self.axis_jitter_mhz == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub field_range_t: [f64; 2],
    pub count: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// Fields accepted anywhere a field is configured, tesla.
pub const SUPPORTED_FIELD_RANGE_T: (f64, f64) = (0.0, 2.0);

fn check_field(b: f64, what: &str) -> Result<()> {
    let (lo, hi) = SUPPORTED_FIELD_RANGE_T;
    if !(b >= lo && b <= hi) {
        return Err(Error::Config(format!(
            "{what} = {b} T lies outside the supported range [{lo}, {hi}] T"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            constants_file: None,
            output_dir: None,
            seed: None,
            obe: None,
            simulate: None,
            calibrate: None,
            peaks: None,
            estimate: None,
            dataset: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config schema_version {} (supported: {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let exists = |p: &Path, what: &str| -> Result<()> {
            let full = self.resolve(p);
            if full.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", full.display())))
            }
        };
        if let Some(p) = &self.constants_file {
            exists(p, "constants_file")?;
        }
        if let Some(obe) = &self.obe {
            obe.validate()?;
        }
        if let Some(s) = &self.simulate {
            for &b in &s.fields_t {
                check_field(b, "simulate.fields_t entry")?;
            }
        }
        if let Some(c) = &self.calibrate {
            c.validate()?;
        }
        if let Some(p) = &self.peaks {
            if let Some(b) = p.field_t {
                check_field(b, "peaks.field_t")?;
            }
            if !(p.search_half_width_mhz > 0.0) {
                return Err(Error::Config("peaks.search_half_width_mhz must be positive".into()));
            }
            if !(p.min_prominence > 0.0 && p.min_prominence < 1.0) {
                return Err(Error::Config("peaks.min_prominence must lie in (0, 1)".into()));
            }
        }
        if let Some(e) = &self.estimate {
            let [lo, hi] = e.bounds_t;
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::Config(format!(
                    "estimate.bounds_t must satisfy 0 < low < high, got [{lo}, {hi}]"
                )));
            }
            check_field(hi, "estimate.bounds_t high")?;
            if let Some(p) = &e.calibration_report {
                exists(p, "estimate.calibration_report")?;
            }
            if e.sigma_calib_mhz.is_some_and(|s| !(s >= 0.0)) {
                return Err(Error::Config("estimate.sigma_calib_mhz must be non-negative".into()));
            }
            if e.n_mc < crate::estimator::MIN_TRIALS {
                return Err(Error::Config(format!(
                    "estimate.n_mc must be at least {}",
                    crate::estimator::MIN_TRIALS
                )));
            }
            if !(e.gate_mhz > 0.0) || !(e.tolerance_t > 0.0) {
                return Err(Error::Config("estimate.gate_mhz and estimate.tolerance_t must be positive".into()));
            }
            if let Some(b) = e.b_guess_t {
                if !(b >= lo && b <= hi) {
                    return Err(Error::Config(format!("estimate.b_guess_t = {b} T lies outside bounds_t")));
                }
            }
            if e.measurement_time_s.is_some_and(|t| !(t > 0.0)) {
                return Err(Error::Config("estimate.measurement_time_s must be positive".into()));
            }
        }
        if let Some(d) = &self.dataset {
            let [lo, hi] = d.field_range_t;
            if !(lo <= hi) {
                return Err(Error::Config(format!("dataset.field_range_t is reversed: [{lo}, {hi}]")));
            }
            check_field(lo, "dataset.field_range_t low")?;
            check_field(hi, "dataset.field_range_t high")?;
            if d.count == 0 {
                return Err(Error::Config("dataset.count must be at least 1".into()));
            }
            d.noise.validate()?;
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<AtomicConstants> {
        match &self.constants_file {
            Some(p) => AtomicConstants::load(self.resolve(p)),
            None => Ok(AtomicConstants::rb87()),
        }
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::Config(format!("config has no [{name}] section")))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new()
    }
}
