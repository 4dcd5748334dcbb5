use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{calibrate, extract_peaks, find_peaks, PeakList, RawTrace, SigmaCalibSource};
use crate::atomic::{transition_table, AtomicConstants, FieldModel};
use crate::error::{Error, Result};
use crate::estimator::{
    assign_peaks, assign_peaks_scan, monte_carlo_uncertainty, sensitivity_report, EstimatorOptions, FieldEstimate, Sensitivity,
    TrialSummary,
};
use crate::obe::{simulate_spectrum, Spectrum, GENERATOR};

use super::config::{NoiseSpec, PeakSearch, RunConfig};
use super::manifest::{sha256_file, DatasetEntry, DatasetManifest};

/// Output location, seed override and a progress sink (standard error in the CLI).
pub struct Context<'a> {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub progress: &'a (dyn Fn(&str) + Sync),
}

impl Context<'_> {
    fn output_dir(&self, config: &RunConfig) -> Result<PathBuf> {
        let dir = match (&self.output_dir, &config.output_dir) {
            (Some(d), _) => d.clone(),
            (None, Some(d)) => config.resolve(d),
            (None, None) => PathBuf::from("output"),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
        Ok(dir)
    }

    fn seed(&self, config: &RunConfig) -> Result<u64> {
        self.seed
            .or(config.seed)
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }
}

/// RFC 3339 time from SOURCE_DATE_EPOCH, if set.
pub fn creation_timestamp() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()?;
    chrono::DateTime::from_timestamp(secs, 0).map(|t| t.to_rfc3339())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "input".into())
}

fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::from(e).context(path.display().to_string()))
}

pub fn spectrum_file_name(index: usize, field_t: f64) -> String {
    format!("spectrum_{index:02}_B{field_t:.4}T.csv")
}

/// One spectrum per configured field.
pub fn cmd_simulate(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    let fields = &config.section(&config.simulate, "simulate")?.fields_t;
    if fields.is_empty() {
        return Err(Error::Config("no work: simulate.fields_t is empty".into()));
    }
    let params = config.section(&config.obe, "obe")?;
    let constants = config.constants()?;
    let dir = ctx.output_dir(config)?;
    let mut out = Vec::new();
    for (i, &b) in fields.iter().enumerate() {
        (ctx.progress)(&format!(
            "simulate: B = {b} T ({}/{}), {} detunings",
            i + 1,
            fields.len(),
            params.detuning.len()
        ));
        let mut spectrum = simulate_spectrum(b, params, &constants).map_err(|e| e.context(format!("B = {b} T")))?;
        spectrum.meta.created = creation_timestamp();
        let path = dir.join(spectrum_file_name(i, b));
        spectrum.save(&path)?;
        out.push(path);
    }
    Ok(out)
}

pub fn cmd_transitions<W: std::io::Write>(field_t: f64, constants: &AtomicConstants, writer: W) -> Result<()> {
    transition_table(field_t, constants)?.write_csv(writer)
}

/// Lines centers from a spectrum according to the search settings.
pub fn peaks_from_spectrum(spectrum: &Spectrum, search: &PeakSearch, constants: &AtomicConstants) -> Result<PeakList> {
    Ok(match search.field_t {
        Some(b) => {
            let lines = FieldModel::new(b, constants)?.principal_sigma_lines();
            extract_peaks(spectrum, &lines, search.search_half_width_mhz, search.profile)
        }
        None => find_peaks(spectrum, search.min_prominence, search.search_half_width_mhz, search.profile),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub trace: String,
    pub marker_count: usize,
    pub interval_count: usize,
    pub fsr_mhz: f64,
    /// Markers whose three-point refinement was flat.
    pub flat_markers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_rms_mhz: Option<f64>,
    pub suggested_sigma_calib_mhz: f64,
    pub sigma_calib_source: SigmaCalibSource,
    pub anchor_sample: f64,
    pub anchor_detuning_mhz: f64,
    pub axis_min_mhz: f64,
    pub axis_max_mhz: f64,
    pub peak_count: usize,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

impl CalibrationReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct CalibrateOutput {
    pub spectrum: PathBuf,
    pub peaks: PathBuf,
    pub report: PathBuf,
    pub diagnostics: CalibrationReport,
}

pub fn cmd_calibrate(trace_file: &Path, config: &RunConfig, ctx: &Context) -> Result<CalibrateOutput> {
    let settings = config.section(&config.calibrate, "calibrate")?;
    let constants = config.constants()?;
    let dir = ctx.output_dir(config)?;
    (ctx.progress)(&format!("calibrate: reading {}", trace_file.display()));
    let trace = RawTrace::load(trace_file)?;
    let cal = calibrate(&trace, settings).map_err(|e| e.context(trace_file.display().to_string()))?;
    (ctx.progress)(&format!("calibrate: {} etalon markers", cal.axis.markers.len()));
    let mut spectrum = cal.spectrum.clone();
    spectrum.meta.created = creation_timestamp();
    let search = config.peaks.clone().unwrap_or_default();
    let peaks = peaks_from_spectrum(&spectrum, &search, &constants)?;
    let name = stem(trace_file);
    let spectrum_path = dir.join(format!("{name}_spectrum.csv"));
    let peaks_path = dir.join(format!("{name}_peaks.csv"));
    let report_path = dir.join(format!("{name}_calibration.toml"));
    spectrum.save(&spectrum_path)?;
    peaks.save(&peaks_path)?;
    let nu = &cal.axis.nu_mhz;
    let diagnostics = CalibrationReport {
        trace: trace_file.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        marker_count: cal.axis.markers.len(),
        interval_count: cal.axis.markers.len().saturating_sub(1),
        fsr_mhz: cal.axis.fsr_mhz,
        flat_markers: cal.flat_markers,
        spacing_rms_mhz: cal.spacing_rms_mhz,
        suggested_sigma_calib_mhz: cal.sigma_calib_mhz,
        sigma_calib_source: cal.sigma_calib_source,
        anchor_sample: cal.axis.anchor_sample,
        anchor_detuning_mhz: cal.axis.anchor_detuning_mhz,
        axis_min_mhz: nu.iter().cloned().fold(f64::INFINITY, f64::min),
        axis_max_mhz: nu.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        peak_count: peaks.entries.len(),
        generator: GENERATOR.to_string(),
        created: creation_timestamp(),
    };
    write_toml(&diagnostics, &report_path)?;
    Ok(CalibrateOutput {
        spectrum: spectrum_path,
        peaks: peaks_path,
        report: report_path,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub transition: String,
    #[serde(rename = "center_MHz")]
    pub center_mhz: f64,
    #[serde(rename = "residual_MHz")]
    pub residual_mhz: f64,
    #[serde(rename = "sigma_k_MHz")]
    pub sigma_k_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    #[serde(rename = "std_T")]
    pub std_t: f64,
    #[serde(rename = "min_T")]
    pub min_t: f64,
    #[serde(rename = "max_T")]
    pub max_t: f64,
}

impl From<&TrialSummary> for TrialRecord {
    fn from(s: &TrialSummary) -> Self {
        TrialRecord {
            mean_t: s.mean_t,
            std_t: s.std_t,
            min_t: s.min_t,
            max_t: s.max_t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub peaks_file: String,
    #[serde(rename = "B_hat_T")]
    pub b_hat_t: f64,
    #[serde(rename = "sigma_B_T")]
    pub sigma_b_t: f64,
    #[serde(rename = "N_MC")]
    pub n_mc: usize,
    #[serde(rename = "loss_MHz2")]
    pub loss_mhz2: f64,
    #[serde(rename = "bounds_T")]
    pub bounds_t: [f64; 2],
    #[serde(rename = "sigma_calib_MHz")]
    pub sigma_calib_mhz: f64,
    /// `config` or `calibration_report` (etalon marker spacing RMS).
    pub sigma_calib_source: String,
    pub weighted: bool,
    pub seed: u64,
    #[serde(rename = "assignment_field_T", default, skip_serializing_if = "Option::is_none")]
    pub assignment_field_t: Option<f64>,
    pub failed_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Sensitivity>,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub trials: TrialRecord,
    pub residuals: Vec<ResidualRecord>,
}

#[derive(Clone, Debug)]
pub struct EstimateOutput {
    pub report: PathBuf,
    pub trials: PathBuf,
    pub summary: String,
    pub estimate: FieldEstimate,
}

pub fn summary_line(b_t: f64, sigma_t: f64) -> String {
    format!("B = {b_t:.4} ± {sigma_t:.4} T")
}

pub fn cmd_estimate(peaks_file: &Path, config: &RunConfig, ctx: &Context) -> Result<EstimateOutput> {
    let section = config.section(&config.estimate, "estimate")?;
    let seed = ctx.seed(config)?;
    let constants = config.constants()?;
    let (sigma_calib, source) = match (section.sigma_calib_mhz, &section.calibration_report) {
        (Some(s), _) => (s, "config".to_string()),
        (None, Some(p)) => (
            CalibrationReport::load(&config.resolve(p))?.suggested_sigma_calib_mhz,
            "calibration_report".to_string(),
        ),
        (None, None) => {
            return Err(Error::Config(
                "estimate needs sigma_calib_mhz or calibration_report (written by `calibrate`)".into(),
            ))
        }
    };
    let dir = ctx.output_dir(config)?;
    let mut peaks = PeakList::load(peaks_file)?;
    let bounds = (section.bounds_t[0], section.bounds_t[1]);
    let mut assignment_field_t = None;
    if peaks.entries.iter().any(|e| e.label.is_none() && e.center_mhz.is_finite()) {
        let (assigned, b) = match section.b_guess_t {
            Some(b) => (assign_peaks(&peaks, b, section.gate_mhz, &constants)?, b),
            None => assign_peaks_scan(&peaks, bounds, section.gate_mhz, &constants)?,
        };
        (ctx.progress)(&format!("estimate: assigned {} peaks at B = {b:.4} T", assigned.usable().count()));
        peaks = assigned;
        assignment_field_t = Some(b);
    }
    let options = EstimatorOptions {
        weighted: section.weighted,
        tolerance_t: section.tolerance_t,
    };
    (ctx.progress)(&format!("estimate: {} Monte Carlo trials", section.n_mc));
    let estimate = monte_carlo_uncertainty(&peaks, sigma_calib, section.n_mc, bounds, seed, &options, &constants)?;
    let sensitivity = section
        .measurement_time_s
        .map(|t| sensitivity_report(estimate.sigma_b_t, t))
        .transpose()?;
    let report = EstimateReport {
        peaks_file: peaks_file.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        b_hat_t: estimate.b_hat_t,
        sigma_b_t: estimate.sigma_b_t,
        n_mc: estimate.n_mc,
        loss_mhz2: estimate.loss_mhz2,
        bounds_t: section.bounds_t,
        sigma_calib_mhz: sigma_calib,
        sigma_calib_source: source,
        weighted: section.weighted,
        seed,
        assignment_field_t,
        failed_trials: estimate.failed.len(),
        sensitivity,
        generator: GENERATOR.to_string(),
        created: creation_timestamp(),
        trials: (&estimate.trial_summary).into(),
        residuals: estimate
            .residuals
            .iter()
            .map(|r| ResidualRecord {
                transition: r.transition.clone(),
                center_mhz: r.center_mhz,
                residual_mhz: r.residual_mhz,
                sigma_k_mhz: r.sigma_k_mhz,
            })
            .collect(),
    };
    let name = stem(peaks_file);
    let report_path = dir.join(format!("{name}_estimate.toml"));
    let trials_path = dir.join(format!("{name}_trials.csv"));
    write_toml(&report, &report_path)?;
    let mut w = csv::Writer::from_path(&trials_path).map_err(|e| Error::from(e).context(trials_path.display().to_string()))?;
    w.write_record(["trial", "B_T", "status"])?;
    for (i, b) in estimate.trials_t.iter().enumerate() {
        if b.is_finite() {
            w.write_record([i.to_string(), b.to_string(), "ok".into()])?;
        } else {
            w.write_record([i.to_string(), String::new(), "failed".into()])?;
        }
    }
    w.flush()?;
    Ok(EstimateOutput {
        report: report_path,
        trials: trials_path,
        summary: summary_line(estimate.b_hat_t, estimate.sigma_b_t),
        estimate,
    })
}

pub fn dataset_file_name(index: usize) -> String {
    format!("sample_{index:04}.csv")
}

fn degrade(spectrum: &mut Spectrum, noise: &NoiseSpec, seed: u64) -> f64 {
    if noise.is_zero() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: f64 = StandardNormal.sample(&mut rng);
    let shift = noise.axis_jitter_mhz * z;
    for d in &mut spectrum.detuning_mhz {
        *d += shift;
    }
    if noise.white_noise_rms > 0.0 {
        for s in &mut spectrum.signal {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += noise.white_noise_rms * z;
        }
    }
    shift
}

/// Spectra at seeded uniform fields, optionally degraded, plus a manifest.
pub fn cmd_generate_dataset(config: &RunConfig, ctx: &Context) -> Result<(PathBuf, DatasetManifest)> {
    let section = config.section(&config.dataset, "dataset")?;
    let params = config.section(&config.obe, "obe")?;
    let seed = ctx.seed(config)?;
    let constants = config.constants()?;
    let dir = ctx.output_dir(config)?;
    let [lo, hi] = section.field_range_t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, u64)> = (0..section.count)
        .map(|_| {
            let b = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            (b, rng.next_u64())
        })
        .collect();
    let mut entries = Vec::with_capacity(draws.len());
    for (i, &(b, s)) in draws.iter().enumerate() {
        (ctx.progress)(&format!("generate-dataset: B = {b:.6} T ({}/{})", i + 1, draws.len()));
        let mut spectrum = simulate_spectrum(b, params, &constants).map_err(|e| e.context(format!("B = {b} T")))?;
        spectrum.meta.created = creation_timestamp();
        let shift = degrade(&mut spectrum, &section.noise, s);
        let file = PathBuf::from(dataset_file_name(i));
        let path = dir.join(&file);
        spectrum.save(&path)?;
        entries.push(DatasetEntry {
            file,
            field_t: b,
            sha256: sha256_file(&path)?,
            params_digest: spectrum.meta.params_digest.clone(),
            seed: s,
            noise: section.noise.clone(),
            axis_shift_mhz: shift,
        });
    }
    let manifest = DatasetManifest {
        generator: GENERATOR.to_string(),
        constants_version: constants.version_tag(),
        seed,
        field_range_t: section.field_range_t,
        created: creation_timestamp(),
        entries,
    };
    let path = manifest.save(&dir)?;
    Ok((path, manifest))
}

/// Stable machine-readable error description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub exit_code: i32,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            error: e.kind().to_string(),
            exit_code: e.exit_code(),
            message: e.to_string(),
        }
    }
}
