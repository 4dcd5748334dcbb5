use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obe::{Spectrum, SpectrumMeta, GENERATOR};

use super::axis::{build_frequency_axis, sigma_calib_from_markers, FrequencyAxis};
use super::filter::savitzky_golay;
use super::fit::{fit_peak, ProfileKind};
use super::peaks::{detect_etalon_peaks, parabolic_subpixel};

pub const MIN_SAMPLES: usize = 1000;
pub const MAX_TIME_JITTER: f64 = 1e-6;

/// Oscilloscope-style record: a time column and named voltage channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrace {
    pub time_s: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl RawTrace {
    pub fn new(time_s: Vec<f64>, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let trace = RawTrace { time_s, channels };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "trace has {n} samples, need at least {MIN_SAMPLES}"
            )));
        }
        if let Some((name, _)) = self.channels.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::InvalidArgument(format!("channel `{name}` length differs from time_s")));
        }
        let dt = (self.time_s[n - 1] - self.time_s[0]) / (n - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("time_s must increase".into()));
        }
        for (i, w) in self.time_s.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > MAX_TIME_JITTER * dt.max(self.time_s[n - 1].abs()) {
                return Err(Error::InvalidArgument(format!("non-uniform sampling at sample {}", i + 1)));
            }
        }
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| {
                let have: Vec<&str> = self.channels.iter().map(|(n, _)| n.as_str()).collect();
                Error::InvalidArgument(format!("trace has no channel `{name}` (found: {})", have.join(", ")))
            })
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::from(e).context(name.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let time_col = headers.iter().position(|h| h == "time_s").ok_or_else(|| Error::Parse {
            path: name.to_string(),
            line: 1,
            message: "missing column `time_s`".into(),
        })?;
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::from(e).context(name.to_string()))?;
            for (c, field) in record.iter().enumerate().take(headers.len()) {
                let value = field.parse::<f64>().map_err(|_| Error::Parse {
                    path: name.to_string(),
                    line: row as u64 + 2,
                    message: format!("cannot parse `{field}` in column `{}`", headers[c]),
                })?;
                columns[c].push(value);
            }
        }
        let time_s = std::mem::take(&mut columns[time_col]);
        let channels = headers
            .into_iter()
            .zip(columns)
            .enumerate()
            .filter(|(c, _)| *c != time_col)
            .map(|(_, pair)| pair)
            .collect();
        RawTrace::new(time_s, channels).map_err(|e| e.context(name.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(name.clone()))?;
        Self::parse(&text, &name)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time_s".to_string()];
        header.extend(self.channels.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.time_s[i].to_string()];
            row.extend(self.channels.iter().map(|(_, v)| v[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where the zero-detuning reference sits in the scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub detuning_mhz: f64,
    /// Fixed anchor sample.
    #[serde(default)]
    pub sample: Option<f64>,
    /// Sample window on the reference channel fitted to locate the anchor.
    #[serde(default)]
    pub reference_window_samples: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    #[serde(default = "default_etalon")]
    pub etalon_channel: String,
    #[serde(default = "default_signal")]
    pub signal_channel: String,
    #[serde(default = "default_reference")]
    pub reference_channel: String,
    #[serde(default = "default_fsr")]
    pub fsr_mhz: f64,
    #[serde(default = "default_window")]
    pub filter_window: usize,
    #[serde(default = "default_order")]
    pub filter_order: usize,
    /// Fraction of the smoothed etalon range.
    #[serde(default = "default_prominence")]
    pub min_prominence: f64,
    #[serde(default = "default_spacing")]
    pub min_spacing_samples: usize,
    pub anchor: AnchorSpec,
    #[serde(default)]
    pub sigma_calib_mhz: Option<f64>,
}

fn default_etalon() -> String {
    "pd3_V".into()
}
fn default_signal() -> String {
    "pd1_V".into()
}
fn default_reference() -> String {
    "pd2_V".into()
}
fn default_fsr() -> f64 {
    1500.0
}
fn default_window() -> usize {
    11
}
fn default_order() -> usize {
    3
}
fn default_prominence() -> f64 {
    0.3
}
fn default_spacing() -> usize {
    5
}

impl CalibrationSettings {
    pub fn new(anchor: AnchorSpec) -> Self {
        CalibrationSettings {
            etalon_channel: default_etalon(),
            signal_channel: default_signal(),
            reference_channel: default_reference(),
            fsr_mhz: default_fsr(),
            filter_window: default_window(),
            filter_order: default_order(),
            min_prominence: default_prominence(),
            min_spacing_samples: default_spacing(),
            anchor,
            sigma_calib_mhz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fsr_mhz > 0.0) {
            return Err(Error::Config(format!("fsr_mhz must be positive, got {}", self.fsr_mhz)));
        }
        if !(self.min_prominence > 0.0 && self.min_prominence < 1.0) {
            return Err(Error::Config("min_prominence must lie in (0, 1)".into()));
        }
        if self.sigma_calib_mhz.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::Config("sigma_calib_mhz must be non-negative".into()));
        }
        match (&self.anchor.sample, &self.anchor.reference_window_samples) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Config(
                "anchor needs exactly one of `sample` or `reference_window_samples`".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaCalibSource {
    Config,
    MarkerSpacing,
    Unavailable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub axis: FrequencyAxis,
    /// Markers whose refinement hit a flat top and kept the coarse index.
    pub flat_markers: usize,
    pub spacing_rms_mhz: Option<f64>,
    pub sigma_calib_mhz: f64,
    pub sigma_calib_source: SigmaCalibSource,
    pub spectrum: Spectrum,
}

/// Smooths the etalon channel, refines its peaks, builds the axis and maps
/// the signal channel onto it.
pub fn calibrate(trace: &RawTrace, settings: &CalibrationSettings) -> Result<Calibration> {
    settings.validate()?;
    let etalon = trace.channel(&settings.etalon_channel)?;
    let signal = trace.channel(&settings.signal_channel)?;
    let smooth = savitzky_golay(etalon, settings.filter_window, settings.filter_order)?;
    let coarse = detect_etalon_peaks(&smooth, settings.min_prominence, settings.min_spacing_samples);
    let mut markers = Vec::with_capacity(coarse.len());
    let mut flat_markers = 0;
    for &i in &coarse {
        match parabolic_subpixel(&smooth, i) {
            Ok(s) => {
                flat_markers += s.flat as usize;
                markers.push(s.center);
            }
            Err(_) => markers.push(i as f64),
        }
    }
    let anchor_sample = match (settings.anchor.sample, settings.anchor.reference_window_samples) {
        (Some(s), _) => s,
        (None, Some([lo, hi])) => {
            let reference = trace.channel(&settings.reference_channel)?;
            let x: Vec<f64> = (0..reference.len()).map(|i| i as f64).collect();
            fit_peak(&x, reference, (lo, hi), ProfileKind::Gaussian)
                .map_err(|e| e.context("locating the anchor on the reference channel"))?
                .center_mhz
        }
        (None, None) => unreachable!(),
    };
    let axis = build_frequency_axis(
        &markers,
        settings.fsr_mhz,
        (anchor_sample, settings.anchor.detuning_mhz),
        trace.len(),
    )?;
    let spacing_rms_mhz = sigma_calib_from_markers(&markers, settings.fsr_mhz);
    let (sigma_calib_mhz, sigma_calib_source) = match (settings.sigma_calib_mhz, spacing_rms_mhz) {
        (Some(s), _) => (s, SigmaCalibSource::Config),
        (None, Some(s)) => (s, SigmaCalibSource::MarkerSpacing),
        (None, None) => (0.0, SigmaCalibSource::Unavailable),
    };
    let spectrum = Spectrum {
        detuning_mhz: axis.nu_mhz.clone(),
        signal: signal.to_vec(),
        meta: SpectrumMeta {
            field_t: f64::NAN,
            params_digest: String::new(),
            constants_version: String::new(),
            generator: GENERATOR.to_string(),
            peak_raw: signal.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            created: None,
        },
    };
    Ok(Calibration {
        axis,
        flat_markers,
        spacing_rms_mhz,
        sigma_calib_mhz,
        sigma_calib_source,
        spectrum,
    })
}
