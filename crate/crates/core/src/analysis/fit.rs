use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Gaussian,
    Lorentzian,
}

impl ProfileKind {
    /// FWHM in units of the width parameter.
    pub fn fwhm_factor(self) -> f64 {
        match self {
            ProfileKind::Gaussian => 2.0 * (2.0 * std::f64::consts::LN_2).sqrt(),
            ProfileKind::Lorentzian => 2.0,
        }
    }

    /// Profile at u = (x - c) / w, with d/du.
    #[inline]
    fn eval(self, u: f64) -> (f64, f64) {
        match self {
            ProfileKind::Gaussian => {
                let g = (-0.5 * u * u).exp();
                (g, -u * g)
            }
            ProfileKind::Lorentzian => {
                let l = 1.0 / (1.0 + u * u);
                (l, -2.0 * u * l * l)
            }
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Gaussian => "gaussian",
            ProfileKind::Lorentzian => "lorentzian",
        })
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(ProfileKind::Gaussian),
            "lorentzian" => Ok(ProfileKind::Lorentzian),
            other => Err(Error::InvalidArgument(format!("unknown profile kind `{other}`"))),
        }
    }
}

/// amplitude * profile((x - center) / width) + baseline
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_mhz: f64,
    /// Gaussian sigma or Lorentzian half width, MHz.
    pub width_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub sigma_fit_mhz: f64,
    pub kind: ProfileKind,
    /// sqrt(SSR / (n - p)).
    pub goodness: f64,
}

impl PeakFit {
    pub fn fwhm_mhz(&self) -> f64 {
        self.kind.fwhm_factor() * self.width_mhz
    }

    pub fn value(&self, x: f64) -> f64 {
        self.amplitude * self.kind.eval((x - self.center_mhz) / self.width_mhz).0 + self.baseline
    }
}

pub const MAX_ITERATIONS: usize = 500;

pub(crate) struct LmFit {
    pub params: Vec<f64>,
    pub ssr: f64,
    pub jtj: DMatrix<f64>,
}

/// Levenberg-Marquardt with Marquardt diagonal scaling. `model` returns
/// f(x) and writes df/dp; `valid` rejects trial parameter vectors.
pub(crate) fn levenberg_marquardt<M, V>(x: &[f64], y: &[f64], p0: Vec<f64>, model: M, valid: V) -> Result<LmFit>
where
    M: Fn(f64, &[f64], &mut [f64]) -> f64,
    V: Fn(&[f64]) -> bool,
{
    let np = p0.len();
    let mut grad = vec![0.0; np];
    let assemble = |p: &[f64], grad: &mut [f64]| {
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::zeros(np);
        let mut ssr = 0.0;
        for (&xi, &yi) in x.iter().zip(y) {
            let r = yi - model(xi, p, grad);
            ssr += r * r;
            for a in 0..np {
                jtr[a] += grad[a] * r;
                for b in 0..=a {
                    jtj[(a, b)] += grad[a] * grad[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[(b, a)] = jtj[(a, b)];
            }
        }
        (jtj, jtr, ssr)
    };
    let ssr_only = |p: &[f64], grad: &mut [f64]| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (yi - model(xi, p, grad)).powi(2)).sum() };
    let mut p = p0;
    let (mut jtj, mut jtr, mut ssr) = assemble(&p, &mut grad);
    let mut lambda = 1e-3_f64;
    for _ in 0..MAX_ITERATIONS {
        let mut a = jtj.clone();
        for i in 0..np {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&jtr),
            None => {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break;
                }
                continue;
            }
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let trial_ssr = if valid(&trial) {
            ssr_only(&trial, &mut grad)
        } else {
            f64::INFINITY
        };
        if trial_ssr.is_finite() && trial_ssr <= ssr {
            let small_step = p.iter().zip(step.iter()).all(|(p, s)| s.abs() <= 1e-12 * (p.abs() + 1e-12));
            let small_gain = ssr - trial_ssr <= 1e-15 * ssr;
            p = trial;
            (jtj, jtr, ssr) = assemble(&p, &mut grad);
            lambda = (lambda / 3.0).max(1e-15);
            if small_step || small_gain || ssr == 0.0 {
                return Ok(LmFit { params: p, ssr, jtj });
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e20 {
                // no downhill step remains at machine precision
                return Ok(LmFit { params: p, ssr, jtj });
            }
        }
    }
    Err(Error::FitNoConvergence {
        iterations: MAX_ITERATIONS,
        last: p,
    })
}

/// Residual-variance-scaled covariance, None if singular.
pub(crate) fn covariance(fit: &LmFit, n: usize) -> Option<DMatrix<f64>> {
    let np = fit.params.len();
    let dof = n.saturating_sub(np).max(1) as f64;
    let diag_max = (0..np).map(|i| fit.jtj[(i, i)]).fold(0.0, f64::max);
    let eig = fit.jtj.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * diag_max) {
        return None;
    }
    fit.jtj.clone().try_inverse().map(|inv| inv * (fit.ssr / dof))
}

fn window_points(x: &[f64], y: &[f64], window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    x.iter()
        .zip(y)
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, y)| (*x, *y))
        .unzip()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Deterministic start: baseline = median of the outer tenth on each side,
/// center = largest deviation from it, FWHM = half the window.
fn initial_guess(xs: &[f64], ys: &[f64], kind: ProfileKind) -> [f64; 4] {
    let n = xs.len();
    let k = (n / 10).max(1);
    let mut edge: Vec<f64> = ys[..k].to_vec();
    edge.extend_from_slice(&ys[n - k..]);
    let baseline = median(edge);
    let (i, _) = ys.iter().enumerate().fold((0, 0.0), |(bi, bd), (i, y)| {
        if (y - baseline).abs() > bd {
            (i, (y - baseline).abs())
        } else {
            (bi, bd)
        }
    });
    let span = xs[n - 1] - xs[0];
    [ys[i] - baseline, xs[i], 0.5 * span / kind.fwhm_factor(), baseline]
}

fn single_model(kind: ProfileKind) -> impl Fn(f64, &[f64], &mut [f64]) -> f64 {
    move |x, p, g| {
        let (a, c, w, b) = (p[0], p[1], p[2], p[3]);
        let u = (x - c) / w;
        let (f, df) = kind.eval(u);
        g[0] = f;
        g[1] = -a * df / w;
        g[2] = -a * df * u / w;
        g[3] = 1.0;
        a * f + b
    }
}

/// Least-squares fit of one profile plus constant baseline inside `window`.
pub fn fit_peak(x: &[f64], y: &[f64], window: (f64, f64), kind: ProfileKind) -> Result<PeakFit> {
    let (xs, ys) = window_points(x, y, window);
    if xs.len() < 5 {
        return Err(Error::DegenerateWindow(format!(
            "{} points in [{}, {}] MHz",
            xs.len(),
            window.0,
            window.1
        )));
    }
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return Err(Error::DegenerateWindow(format!("flat signal in [{}, {}] MHz", window.0, window.1)));
    }
    let p0 = initial_guess(&xs, &ys, kind);
    let fit = levenberg_marquardt(&xs, &ys, p0.to_vec(), single_model(kind), |p| p[2] > 0.0)?;
    let p = &fit.params;
    if !(p[1] >= xs[0] && p[1] <= xs[xs.len() - 1]) {
        return Err(Error::DegenerateWindow(format!("fitted center {} MHz left the window", p[1])));
    }
    let sigma = covariance(&fit, xs.len())
        .map(|c| c[(1, 1)].max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    let dof = (xs.len() - 4).max(1) as f64;
    Ok(PeakFit {
        center_mhz: p[1],
        width_mhz: p[2],
        amplitude: p[0],
        baseline: p[3],
        sigma_fit_mhz: sigma.max(f64::MIN_POSITIVE),
        kind,
        goodness: (fit.ssr / dof).sqrt(),
    })
}

/// Joint fit of two profiles sharing one baseline. None when the
/// covariance is singular, i.e. the pair cannot be separated.
pub fn fit_pair(
    x: &[f64],
    y: &[f64],
    window: (f64, f64),
    centers: (f64, f64),
    kind: ProfileKind,
    fwhm_guess: f64,
) -> Result<Option<(PeakFit, PeakFit)>> {
    let (xs, ys) = window_points(x, y, window);
    if xs.len() < 8 {
        return Err(Error::DegenerateWindow(format!(
            "{} points in [{}, {}] MHz",
            xs.len(),
            window.0,
            window.1
        )));
    }
    let base = initial_guess(&xs, &ys, kind);
    let w0 = fwhm_guess / kind.fwhm_factor();
    let amp_at = |c: f64| {
        let i = xs.partition_point(|&x| x < c).min(xs.len() - 1);
        ys[i] - base[3]
    };
    let p0 = vec![amp_at(centers.0), centers.0, w0, amp_at(centers.1), centers.1, w0, base[3]];
    let model = move |x: f64, p: &[f64], g: &mut [f64]| {
        let mut total = p[6];
        for k in 0..2 {
            let (a, c, w) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            let u = (x - c) / w;
            let (f, df) = kind.eval(u);
            g[3 * k] = f;
            g[3 * k + 1] = -a * df / w;
            g[3 * k + 2] = -a * df * u / w;
            total += a * f;
        }
        g[6] = 1.0;
        total
    };
    let fit = match levenberg_marquardt(&xs, &ys, p0, model, |p| p[2] > 0.0 && p[5] > 0.0) {
        Ok(f) => f,
        Err(Error::FitNoConvergence { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Some(cov) = covariance(&fit, xs.len()) else {
        return Ok(None);
    };
    let p = &fit.params;
    let dof = (xs.len() - 7).max(1) as f64;
    let goodness = (fit.ssr / dof).sqrt();
    let make = |k: usize| PeakFit {
        center_mhz: p[3 * k + 1],
        width_mhz: p[3 * k + 2],
        amplitude: p[3 * k],
        baseline: p[6],
        sigma_fit_mhz: cov[(3 * k + 1, 3 * k + 1)].max(0.0).sqrt().max(f64::MIN_POSITIVE),
        kind,
        goodness,
    };
    let (a, b) = (make(0), make(1));
    let inside = |c: f64| c >= xs[0] && c <= xs[xs.len() - 1];
    if !inside(a.center_mhz) || !inside(b.center_mhz) || (a.center_mhz - b.center_mhz).abs() < 1e-9 {
        return Ok(None);
    }
    Ok(Some((a, b)))
}
