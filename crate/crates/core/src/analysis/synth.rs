use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::trace::RawTrace;

/// A laser scan with quadratic frequency nonlinearity recorded through an
/// Airy etalon, for calibration tests and datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub n_samples: usize,
    pub sample_period_s: f64,
    pub start_mhz: f64,
    pub span_mhz: f64,
    /// Relative slope change from first to last sample.
    pub nonlinearity: f64,
    pub fsr_mhz: f64,
    pub finesse: f64,
    /// Etalon peak height over white-noise standard deviation; infinite for none.
    pub snr: f64,
    pub seed: u64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            n_samples: 20_000,
            sample_period_s: 1e-5,
            start_mhz: -300.0,
            span_mhz: 30_600.0,
            nonlinearity: 0.2,
            fsr_mhz: 1500.0,
            finesse: 250.0,
            snr: f64::INFINITY,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScan {
    pub trace: RawTrace,
    pub nu_true_mhz: Vec<f64>,
    /// Fractional sample of every etalon transmission maximum inside the scan.
    pub markers_true: Vec<f64>,
}

impl ScanSpec {
    fn coefficients(&self) -> (f64, f64) {
        let n = (self.n_samples - 1) as f64;
        let a = self.span_mhz / (n * (1.0 + 0.5 * self.nonlinearity));
        (a, 0.5 * self.nonlinearity * a / n)
    }

    pub fn nu_at(&self, sample: f64) -> f64 {
        let (a, b) = self.coefficients();
        self.start_mhz + a * sample + b * sample * sample
    }

    /// Inverse of `nu_at` on the scan.
    pub fn sample_at(&self, nu_mhz: f64) -> f64 {
        let (a, b) = self.coefficients();
        let c = self.start_mhz - nu_mhz;
        if b == 0.0 {
            -c / a
        } else {
            2.0 * -c / (a + (a * a - 4.0 * b * c).sqrt())
        }
    }

    pub fn etalon(&self, nu_mhz: f64) -> f64 {
        let f = (2.0 * self.finesse / std::f64::consts::PI).powi(2);
        let s = (std::f64::consts::PI * nu_mhz / self.fsr_mhz).sin();
        1.0 / (1.0 + f * s * s)
    }

    /// Builds pd3_V (etalon) plus one channel per (name, signal(nu)) pair.
    /// Every channel gets independent noise at the same absolute level.
    pub fn generate(&self, channels: &[(&str, &dyn Fn(f64) -> f64)]) -> Result<SyntheticScan> {
        if self.n_samples < 2 || !(self.span_mhz > 0.0) || !(self.fsr_mhz > 0.0) || !(self.finesse > 0.0) {
            return Err(Error::InvalidArgument("invalid synthetic scan".into()));
        }
        if !(self.nonlinearity > -1.0) || !(self.snr > 0.0) {
            return Err(Error::InvalidArgument(
                "nonlinearity must exceed -1 and snr must be positive".into(),
            ));
        }
        let nu: Vec<f64> = (0..self.n_samples).map(|i| self.nu_at(i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise =
            Normal::new(0.0, if self.snr.is_finite() { 1.0 / self.snr } else { 0.0 }).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut noisy = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { nu.iter().map(|&v| f(v) + noise.sample(&mut rng)).collect() };
        let mut named = vec![("pd3_V".to_string(), noisy(&|v| self.etalon(v)))];
        for (name, f) in channels {
            named.push((name.to_string(), noisy(*f)));
        }
        let time_s = (0..self.n_samples).map(|i| i as f64 * self.sample_period_s).collect();
        let (first, last) = (nu[0], nu[self.n_samples - 1]);
        let markers_true = ((first / self.fsr_mhz).ceil() as i64..=(last / self.fsr_mhz).floor() as i64)
            .map(|m| self.sample_at(m as f64 * self.fsr_mhz))
            .collect();
        Ok(SyntheticScan {
            trace: RawTrace::new(time_s, named)?,
            nu_true_mhz: nu,
            markers_true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_scan_map() {
        let s = ScanSpec::default();
        for x in [0.0, 10.5, 9999.0, 19_999.0] {
            assert!((s.sample_at(s.nu_at(x)) - x).abs() < 1e-8);
        }
        assert!((s.nu_at(19_999.0) - s.nu_at(0.0) - s.span_mhz).abs() < 1e-9);
    }

    #[test]
    fn default_scan_holds_21_markers() {
        let scan = ScanSpec::default().generate(&[]).unwrap();
        assert_eq!(scan.markers_true.len(), 21);
        for &m in &scan.markers_true {
            let i = m.round() as usize;
            assert!(scan.trace.channel("pd3_V").unwrap()[i] > 0.5);
        }
    }
}
