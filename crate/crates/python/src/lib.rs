//! Python module `pyhpbsas`.

use std::path::PathBuf;

use hpbsas::analysis::{self, PeakEntry, PeakList, PeakStatus, ProfileKind};
use hpbsas::atomic::{transition_table as table, AtomicConstants, FieldModel};
use hpbsas::estimator::{self, EstimatorOptions};
use hpbsas::obe::{self, OBEParams};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(pyhpbsas, HpbsasError, PyException);

fn err(e: hpbsas::Error) -> PyErr {
    HpbsasError::new_err(format!("[{}] {e}", e.kind()))
}

fn constants(path: Option<PathBuf>) -> PyResult<AtomicConstants> {
    match path {
        Some(p) => AtomicConstants::load(p).map_err(err),
        None => Ok(AtomicConstants::rb87()),
    }
}

fn profile(kind: &str) -> PyResult<ProfileKind> {
    kind.parse().map_err(err)
}

#[pyclass(module = "pyhpbsas", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct Transition {
    polarization: String,
    detuning_mhz: f64,
    coupling: f64,
    ground: String,
    excited: String,
}

#[pymethods]
impl Transition {
    #[getter]
    fn label(&self) -> String {
        format!("{}->{}", self.ground, self.excited)
    }

    fn __repr__(&self) -> String {
        format!(
            "Transition({}, {}, {:.3} MHz, C = {:.5})",
            self.label(),
            self.polarization,
            self.detuning_mhz,
            self.coupling
        )
    }
}

impl From<&hpbsas::atomic::Transition> for Transition {
    fn from(t: &hpbsas::atomic::Transition) -> Self {
        Transition {
            polarization: t.polarization.to_string(),
            detuning_mhz: t.detuning_mhz,
            coupling: t.coupling,
            ground: t.ground_label.to_string(),
            excited: t.excited_label.to_string(),
        }
    }
}

/// All sigma transitions at `field_t` tesla, sorted by detuning.
#[pyfunction]
#[pyo3(signature = (field_t, constants_file=None))]
fn transition_table(field_t: f64, constants_file: Option<PathBuf>) -> PyResult<Vec<Transition>> {
    let c = constants(constants_file)?;
    Ok(table(field_t, &c).map_err(err)?.rows.iter().map(Transition::from).collect())
}

/// The 16 nuclear-spectator lines, 8 per circular polarization.
#[pyfunction]
#[pyo3(signature = (field_t, constants_file=None))]
fn principal_lines(field_t: f64, constants_file: Option<PathBuf>) -> PyResult<Vec<Transition>> {
    let c = constants(constants_file)?;
    let model = FieldModel::new(field_t, &c).map_err(err)?;
    Ok(model.principal_sigma_lines().iter().map(Transition::from).collect())
}

#[pyclass(module = "pyhpbsas", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct Spectrum {
    detuning_mhz: Vec<f64>,
    signal: Vec<f64>,
    field_t: f64,
    params_digest: String,
}

#[pymethods]
impl Spectrum {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(obe::Spectrum::load(&path).map_err(err)?.into())
    }

    fn __len__(&self) -> usize {
        self.signal.len()
    }
}

impl From<obe::Spectrum> for Spectrum {
    fn from(s: obe::Spectrum) -> Self {
        Spectrum {
            detuning_mhz: s.detuning_mhz,
            signal: s.signal,
            field_t: s.meta.field_t,
            params_digest: s.meta.params_digest,
        }
    }
}

/// Simulate a spectrum; `params_toml` holds the body of an `[obe]` table.
#[pyfunction]
#[pyo3(signature = (field_t, params_toml, constants_file=None))]
fn simulate_spectrum(py: Python<'_>, field_t: f64, params_toml: &str, constants_file: Option<PathBuf>) -> PyResult<Spectrum> {
    let c = constants(constants_file)?;
    let params: OBEParams = toml::from_str(params_toml).map_err(|e| HpbsasError::new_err(format!("[config] {e}")))?;
    params.validate().map_err(err)?;
    py.detach(|| obe::simulate_spectrum(field_t, &params, &c))
        .map(Spectrum::from)
        .map_err(err)
}

#[pyclass(module = "pyhpbsas", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct PeakFit {
    center_mhz: f64,
    width_mhz: f64,
    fwhm_mhz: f64,
    amplitude: f64,
    baseline: f64,
    sigma_fit_mhz: f64,
    kind: String,
}

/// Fit one profile ("gaussian" or "lorentzian") to y(x) inside [lo, hi].
#[pyfunction]
#[pyo3(signature = (x, y, lo, hi, kind="gaussian"))]
fn fit_peak(x: Vec<f64>, y: Vec<f64>, lo: f64, hi: f64, kind: &str) -> PyResult<PeakFit> {
    let f = analysis::fit_peak(&x, &y, (lo, hi), profile(kind)?).map_err(err)?;
    Ok(PeakFit {
        center_mhz: f.center_mhz,
        width_mhz: f.width_mhz,
        fwhm_mhz: f.fwhm_mhz(),
        amplitude: f.amplitude,
        baseline: f.baseline,
        sigma_fit_mhz: f.sigma_fit_mhz,
        kind: kind.to_lowercase(),
    })
}

#[pyfunction]
fn savitzky_golay(signal: Vec<f64>, window: usize, order: usize) -> PyResult<Vec<f64>> {
    analysis::savitzky_golay(&signal, window, order).map_err(err)
}

#[pyclass(module = "pyhpbsas", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct FieldEstimate {
    b_hat_t: f64,
    sigma_b_t: f64,
    n_mc: usize,
    loss_mhz2: f64,
    transitions: Vec<String>,
    residuals_mhz: Vec<f64>,
    trials_t: Vec<f64>,
    failed_trials: usize,
}

#[pymethods]
impl FieldEstimate {
    fn summary(&self) -> String {
        hpbsas::io::summary_line(self.b_hat_t, self.sigma_b_t)
    }

    fn __repr__(&self) -> String {
        self.summary()
    }
}

fn peak_list(centers: &[f64], labels: Option<Vec<String>>, sigma_fit: &[f64]) -> PyResult<PeakList> {
    if sigma_fit.len() != centers.len() && sigma_fit.len() != 1 {
        return Err(HpbsasError::new_err(
            "[invalid_argument] sigma_fit_mhz must have one value or one per center",
        ));
    }
    if labels.as_ref().is_some_and(|l| l.len() != centers.len()) {
        return Err(HpbsasError::new_err("[invalid_argument] labels and centers differ in length"));
    }
    let mut entries = Vec::with_capacity(centers.len());
    for (i, &c) in centers.iter().enumerate() {
        let label = match &labels {
            Some(l) => Some(analysis::parse_label(&l[i]).map_err(err)?),
            None => None,
        };
        entries.push(PeakEntry {
            label,
            center_mhz: c,
            sigma_fit_mhz: if sigma_fit.len() == 1 { sigma_fit[0] } else { sigma_fit[i] },
            fwhm_mhz: f64::NAN,
            kind: ProfileKind::Gaussian,
            status: if label.is_some() { PeakStatus::Ok } else { PeakStatus::Unassigned },
        });
    }
    Ok(PeakList { entries })
}

/// Least-squares field from line centers with Monte Carlo errors.
///
/// Without `labels`, peaks are assigned by scanning the bounds.
#[pyfunction]
#[pyo3(signature = (centers_mhz, bounds_t, sigma_calib_mhz, seed, labels=None, sigma_fit_mhz=vec![0.0], n_mc=1000, weighted=false, constants_file=None))]
#[allow(clippy::too_many_arguments)]
fn estimate_field(
    py: Python<'_>,
    centers_mhz: Vec<f64>,
    bounds_t: (f64, f64),
    sigma_calib_mhz: f64,
    seed: u64,
    labels: Option<Vec<String>>,
    sigma_fit_mhz: Vec<f64>,
    n_mc: usize,
    weighted: bool,
    constants_file: Option<PathBuf>,
) -> PyResult<FieldEstimate> {
    let c = constants(constants_file)?;
    let mut peaks = peak_list(&centers_mhz, labels, &sigma_fit_mhz)?;
    if peaks.entries.iter().any(|e| e.label.is_none()) {
        peaks = estimator::assign_peaks_scan(&peaks, bounds_t, estimator::DEFAULT_GATE_MHZ, &c)
            .map_err(err)?
            .0;
    }
    let options = EstimatorOptions {
        weighted,
        ..EstimatorOptions::default()
    };
    let e = py
        .detach(|| estimator::monte_carlo_uncertainty(&peaks, sigma_calib_mhz, n_mc, bounds_t, seed, &options, &c))
        .map_err(err)?;
    Ok(FieldEstimate {
        b_hat_t: e.b_hat_t,
        sigma_b_t: e.sigma_b_t,
        n_mc: e.n_mc,
        loss_mhz2: e.loss_mhz2,
        transitions: e.residuals.iter().map(|r| r.transition.clone()).collect(),
        residuals_mhz: e.residuals.iter().map(|r| r.residual_mhz).collect(),
        trials_t: e.trials_t.clone(),
        failed_trials: e.failed.len(),
    })
}

/// Sum of squared residuals (MHz^2) of labeled centers at `field_t`.
#[pyfunction]
#[pyo3(signature = (field_t, labels, centers_mhz, constants_file=None))]
fn loss(field_t: f64, labels: Vec<String>, centers_mhz: Vec<f64>, constants_file: Option<PathBuf>) -> PyResult<f64> {
    let c = constants(constants_file)?;
    let peaks = peak_list(&centers_mhz, Some(labels), &[0.0])?;
    estimator::loss(field_t, &peaks, &c).map_err(err)
}

/// Field sensitivity in mT/sqrt(Hz).
#[pyfunction]
fn sensitivity(sigma_b_t: f64, measurement_time_s: f64) -> PyResult<f64> {
    Ok(estimator::sensitivity_report(sigma_b_t, measurement_time_s)
        .map_err(err)?
        .mt_per_sqrt_hz)
}

#[pymodule]
fn pyhpbsas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HpbsasError", m.py().get_type::<HpbsasError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Transition>()?;
    m.add_class::<Spectrum>()?;
    m.add_class::<PeakFit>()?;
    m.add_class::<FieldEstimate>()?;
    m.add_function(wrap_pyfunction!(transition_table, m)?)?;
    m.add_function(wrap_pyfunction!(principal_lines, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(fit_peak, m)?)?;
    m.add_function(wrap_pyfunction!(savitzky_golay, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_field, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    Ok(())
}
