use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear sample -> detuning map anchored on etalon markers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    /// Detuning of every sample, MHz.
    pub nu_mhz: Vec<f64>,
    /// Marker positions in fractional samples.
    pub markers: Vec<f64>,
    pub fsr_mhz: f64,
    pub anchor_sample: f64,
    pub anchor_detuning_mhz: f64,
}

impl FrequencyAxis {
    /// Detuning at a fractional sample position.
    pub fn at(&self, sample: f64) -> f64 {
        unanchored(&self.markers, self.fsr_mhz, sample) - unanchored(&self.markers, self.fsr_mhz, self.anchor_sample)
            + self.anchor_detuning_mhz
    }

    /// Marker-to-marker spacings of the reconstructed axis, MHz.
    pub fn marker_spacings(&self) -> Vec<f64> {
        self.markers.windows(2).map(|w| self.at(w[1]) - self.at(w[0])).collect()
    }
}

/// Marker m sits at m * fsr; linear in between, nearest-segment slope outside.
fn unanchored(markers: &[f64], fsr: f64, x: f64) -> f64 {
    let last = markers.len() - 1;
    let seg = match markers.partition_point(|&m| m <= x) {
        0 => 0,
        k if k > last => last - 1,
        k => k - 1,
    };
    let (a, b) = (markers[seg], markers[seg + 1]);
    (seg as f64 + (x - a) / (b - a)) * fsr
}

/// Builds the axis for `n_samples` samples. `anchor` is (sample, detuning MHz).
pub fn build_frequency_axis(etalon_centers: &[f64], fsr_mhz: f64, anchor: (f64, f64), n_samples: usize) -> Result<FrequencyAxis> {
    if etalon_centers.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 etalon markers, found {}",
            etalon_centers.len()
        )));
    }
    if etalon_centers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("etalon markers are not strictly increasing".into()));
    }
    if !(fsr_mhz > 0.0) {
        return Err(Error::InvalidArgument(format!("fsr must be positive, got {fsr_mhz}")));
    }
    let (anchor_sample, anchor_detuning_mhz) = anchor;
    if !(anchor_sample >= 0.0 && anchor_sample <= (n_samples.max(1) - 1) as f64) {
        return Err(Error::InvalidArgument(format!(
            "anchor sample {anchor_sample} lies outside the scan [0, {}]",
            n_samples.saturating_sub(1)
        )));
    }
    let mut axis = FrequencyAxis {
        nu_mhz: Vec::new(),
        markers: etalon_centers.to_vec(),
        fsr_mhz,
        anchor_sample,
        anchor_detuning_mhz,
    };
    axis.nu_mhz = (0..n_samples).map(|i| axis.at(i as f64)).collect();
    Ok(axis)
}

/// RMS deviation of marker spacings from their mean, converted to MHz with
/// the mean spacing.
pub fn sigma_calib_from_markers(markers: &[f64], fsr_mhz: f64) -> Option<f64> {
    if markers.len() < 3 {
        return None;
    }
    let d: Vec<f64> = markers.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let rms = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    Some(fsr_mhz * rms / mean)
}
