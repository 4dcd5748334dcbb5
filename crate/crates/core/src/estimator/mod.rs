//! Field inversion from assigned line centers with Monte Carlo errors.

mod assign;
mod minimize;
mod predict;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{format_label, PeakList, TransitionLabel};
use crate::atomic::AtomicConstants;
use crate::error::{Error, Result};

pub use assign::{assign_peaks, assign_peaks_scan, DEFAULT_GATE_MHZ, SCAN_STEP_T};
pub use minimize::{brent_minimize, MAX_ITERATIONS};
pub use predict::LinePredictor;

pub const FIELD_TOLERANCE_T: f64 = 1e-6;
pub const MIN_TRIALS: usize = 100;
pub const MAX_FAILED_FRACTION: f64 = 0.05;

/// One assigned line: label, measured center and fit uncertainty (MHz).
#[derive(Clone, Debug, PartialEq)]
pub struct AssignedPeak {
    pub label: TransitionLabel,
    pub center_mhz: f64,
    pub sigma_fit_mhz: f64,
}

pub fn assigned(peaks: &PeakList) -> Result<Vec<AssignedPeak>> {
    peaks.check_duplicates()?;
    let out: Vec<AssignedPeak> = peaks
        .usable()
        .map(|e| AssignedPeak {
            label: e.label.expect("usable peaks carry a label"),
            center_mhz: e.center_mhz,
            sigma_fit_mhz: if e.sigma_fit_mhz.is_finite() { e.sigma_fit_mhz } else { 0.0 },
        })
        .collect();
    if out.len() < 2 {
        return Err(Error::UnderConstrained(out.len()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Weight residuals by 1/σ_k²; off reproduces the plain sum of squares.
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance_t: f64,
}

fn default_tolerance() -> f64 {
    FIELD_TOLERANCE_T
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            weighted: false,
            tolerance_t: FIELD_TOLERANCE_T,
        }
    }
}

/// Objective over a fixed assignment.
pub struct Problem<'a> {
    predictor: LinePredictor<'a>,
    centers: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(peaks: &[AssignedPeak], sigma_calib_mhz: f64, options: &EstimatorOptions, constants: &'a AtomicConstants) -> Result<Self> {
        if peaks.len() < 2 {
            return Err(Error::UnderConstrained(peaks.len()));
        }
        let weights = if options.weighted {
            peaks
                .iter()
                .map(|p| {
                    let s2 = p.sigma_fit_mhz.powi(2) + sigma_calib_mhz.powi(2);
                    if s2 > 0.0 {
                        Ok(1.0 / s2)
                    } else {
                        Err(Error::InvalidArgument("weighted fit needs a nonzero σ_k for every peak".into()))
                    }
                })
                .collect::<Result<_>>()?
        } else {
            vec![1.0; peaks.len()]
        };
        Ok(Problem {
            predictor: LinePredictor::new(peaks.iter().map(|p| p.label).collect(), constants),
            centers: peaks.iter().map(|p| p.center_mhz).collect(),
            weights,
        })
    }

    pub fn loss_with(&self, field_t: f64, centers: &[f64]) -> Result<f64> {
        let nu = self.predictor.detunings(field_t)?;
        Ok(nu
            .iter()
            .zip(centers)
            .zip(&self.weights)
            .map(|((t, c), w)| w * (c - t).powi(2))
            .sum())
    }

    pub fn loss(&self, field_t: f64) -> Result<f64> {
        self.loss_with(field_t, &self.centers)
    }

    /// Bounded minimization; a minimum pinned to a bound is a bracket failure.
    pub fn minimize(&self, centers: &[f64], bounds: (f64, f64), tolerance_t: f64) -> Result<(f64, f64)> {
        let (lo, hi) = bounds;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid bounds [{lo}, {hi}] T")));
        }
        let (b, l) = brent_minimize(|b| self.loss_with(b, centers), bounds, tolerance_t)?;
        if b - lo < 10.0 * tolerance_t || hi - b < 10.0 * tolerance_t {
            return Err(Error::BracketFailure {
                field: b,
                low: lo,
                high: hi,
            });
        }
        Ok((b, l))
    }

    pub fn residuals(&self, field_t: f64) -> Result<Vec<f64>> {
        let nu = self.predictor.detunings(field_t)?;
        Ok(self.centers.iter().zip(&nu).map(|(c, t)| c - t).collect())
    }

    /// Linear propagation of σ_k through the least-squares estimator at B.
    pub fn analytic_sigma(&self, field_t: f64, sigmas: &[f64]) -> Result<f64> {
        let j = self.predictor.slopes(field_t)?;
        let norm: f64 = j.iter().zip(&self.weights).map(|(j, w)| w * j * j).sum();
        let var: f64 = j
            .iter()
            .zip(&self.weights)
            .zip(sigmas)
            .map(|((j, w), s)| (w * j * s).powi(2))
            .sum::<f64>()
            / (norm * norm);
        Ok(var.sqrt())
    }
}

/// Sum of squared residuals over the assigned peaks at field B, MHz².
pub fn loss(field_t: f64, peaks: &PeakList, constants: &AtomicConstants) -> Result<f64> {
    Problem::new(&assigned(peaks)?, 0.0, &EstimatorOptions::default(), constants)?.loss(field_t)
}

pub fn estimate_field(peaks: &PeakList, bounds: (f64, f64), constants: &AtomicConstants) -> Result<f64> {
    let problem = Problem::new(&assigned(peaks)?, 0.0, &EstimatorOptions::default(), constants)?;
    Ok(problem.minimize(&problem.centers, bounds, FIELD_TOLERANCE_T)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean_t: f64,
    pub std_t: f64,
    pub min_t: f64,
    pub max_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub transition: String,
    pub center_mhz: f64,
    pub residual_mhz: f64,
    pub sigma_k_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub b_hat_t: f64,
    pub sigma_b_t: f64,
    pub n_mc: usize,
    pub loss_mhz2: f64,
    pub residuals: Vec<Residual>,
    pub bounds_t: (f64, f64),
    pub sigma_calib_mhz: f64,
    pub weighted: bool,
    pub seed: u64,
    pub trial_summary: TrialSummary,
    /// Field of every trial in order; NaN for failed trials.
    #[serde(skip)]
    pub trials_t: Vec<f64>,
    pub failed: Vec<FailedTrial>,
}

fn summary(values: &[f64]) -> TrialSummary {
    let n = values.len() as f64;
    let first = values.first().copied().unwrap_or(f64::NAN);
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    TrialSummary {
        mean_t: mean,
        std_t: var.sqrt(),
        min_t: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max_t: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// σ_k = sqrt(σ_fit² + σ_calib²), MHz.
pub fn sigma_k(peaks: &[AssignedPeak], sigma_calib_mhz: f64) -> Vec<f64> {
    peaks.iter().map(|p| p.sigma_fit_mhz.hypot(sigma_calib_mhz)).collect()
}

/// Fits the unperturbed centers, then refits `n_mc` perturbed copies. All
/// noise is drawn up front in trial-major order from a ChaCha8 stream, so the
/// result does not depend on the thread count.
pub fn monte_carlo_uncertainty(
    peaks: &PeakList,
    sigma_calib_mhz: f64,
    n_mc: usize,
    bounds: (f64, f64),
    seed: u64,
    options: &EstimatorOptions,
    constants: &AtomicConstants,
) -> Result<FieldEstimate> {
    if n_mc < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("N_MC must be at least {MIN_TRIALS}, got {n_mc}")));
    }
    if !(sigma_calib_mhz >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma_calib must be non-negative, got {sigma_calib_mhz}"
        )));
    }
    let peaks = assigned(peaks)?;
    let problem = Problem::new(&peaks, sigma_calib_mhz, options, constants)?;
    let (b_hat, loss_value) = problem.minimize(&problem.centers, bounds, options.tolerance_t)?;
    let sigmas = sigma_k(&peaks, sigma_calib_mhz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = (0..n_mc)
        .map(|_| {
            sigmas
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                })
                .collect()
        })
        .collect();
    let outcomes: Vec<Result<f64>> = noise
        .par_iter()
        .map(|delta| {
            let centers: Vec<f64> = problem.centers.iter().zip(delta).map(|(c, d)| c + d).collect();
            problem.minimize(&centers, bounds, options.tolerance_t).map(|(b, _)| b)
        })
        .collect();
    let mut trials_t = Vec::with_capacity(n_mc);
    let mut failed = Vec::new();
    for (trial, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(b) => trials_t.push(b),
            Err(e) => {
                trials_t.push(f64::NAN);
                failed.push(FailedTrial {
                    trial,
                    error: e.to_string(),
                });
            }
        }
    }
    if failed.len() as f64 > MAX_FAILED_FRACTION * n_mc as f64 {
        return Err(Error::TooManyTrialFailures {
            failed: failed.len(),
            total: n_mc,
        });
    }
    let good: Vec<f64> = trials_t.iter().cloned().filter(|b| b.is_finite()).collect();
    let trial_summary = summary(&good);
    let residuals = problem
        .residuals(b_hat)?
        .into_iter()
        .zip(&peaks)
        .zip(&sigmas)
        .map(|((r, p), s)| Residual {
            transition: format_label(&p.label),
            center_mhz: p.center_mhz,
            residual_mhz: r,
            sigma_k_mhz: *s,
        })
        .collect();
    Ok(FieldEstimate {
        b_hat_t: b_hat,
        sigma_b_t: trial_summary.std_t,
        n_mc,
        loss_mhz2: loss_value,
        residuals,
        bounds_t: bounds,
        sigma_calib_mhz,
        weighted: options.weighted,
        seed,
        trial_summary,
        trials_t,
        failed,
    })
}

/// σ_B from the analytic Jacobian at B_hat for the given peaks.
pub fn analytic_sigma_b(
    peaks: &PeakList,
    b_t: f64,
    sigma_calib_mhz: f64,
    options: &EstimatorOptions,
    constants: &AtomicConstants,
) -> Result<f64> {
    let peaks = assigned(peaks)?;
    let problem = Problem::new(&peaks, sigma_calib_mhz, options, constants)?;
    problem.analytic_sigma(b_t, &sigma_k(&peaks, sigma_calib_mhz))
}

pub const SENSITIVITY_FORMULA: &str = "sigma_B[mT] * sqrt(t[s])";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub mt_per_sqrt_hz: f64,
    pub measurement_time_s: f64,
    pub formula: String,
}

pub fn sensitivity_report(sigma_b_t: f64, measurement_time_s: f64) -> Result<Sensitivity> {
    if !(measurement_time_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "measurement time must be positive, got {measurement_time_s} s"
        )));
    }
    Ok(Sensitivity {
        mt_per_sqrt_hz: sigma_b_t * 1e3 * measurement_time_s.sqrt(),
        measurement_time_s,
        formula: SENSITIVITY_FORMULA.to_string(),
    })
}
