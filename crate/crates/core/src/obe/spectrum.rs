use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicConstants, FieldModel};
use crate::error::{Error, Result};

use super::dynamics::Simulator;
use super::params::{maxwell_weights, OBEParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMeta {
    pub field_t: f64,
    pub params_digest: String,
    pub constants_version: String,
    pub generator: String,
    /// Maximum of the signal before normalization.
    pub peak_raw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

/// Signal versus laser detuning.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub detuning_mhz: Vec<f64>,
    pub signal: Vec<f64>,
    pub meta: SpectrumMeta,
}

pub const GENERATOR: &str = concat!("hpbsas ", env!("CARGO_PKG_VERSION"));

impl Spectrum {
    pub fn len(&self) -> usize {
        self.detuning_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning_mhz.is_empty()
    }

    /// Divides by the maximum; an all-zero signal is left as is.
    pub fn normalize(&mut self) {
        let max = self.signal.iter().cloned().fold(0.0, f64::max);
        self.meta.peak_raw = max;
        if max > 0.0 {
            for s in &mut self.signal {
                *s /= max;
            }
        }
    }

    /// Sidecar path: `x.csv` -> `x.meta.toml`.
    pub fn meta_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.toml")
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["detuning_MHz", "signal"])?;
        for (d, s) in self.detuning_mhz.iter().zip(&self.signal) {
            w.write_record([d.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV and its metadata sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(csv_path, buf)?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(Self::meta_path(csv_path), meta)?;
        Ok(())
    }

    /// Reads a CSV with `detuning_MHz` and `signal` columns and, if present,
    /// its sidecar.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let (detuning_mhz, signal) = read_two_columns(csv_path, "detuning_MHz", "signal")?;
        let meta_path = Self::meta_path(csv_path);
        let meta = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?
        } else {
            SpectrumMeta {
                field_t: f64::NAN,
                params_digest: String::new(),
                constants_version: String::new(),
                generator: String::new(),
                peak_raw: signal.iter().cloned().fold(0.0, f64::max),
                created: None,
            }
        };
        Ok(Spectrum {
            detuning_mhz,
            signal,
            meta,
        })
    }
}

fn read_two_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::from(e).context(name.clone()))?;
    let headers = reader.headers().map_err(|e| Error::from(e).context(name.clone()))?.clone();
    let col = |c: &str| {
        headers.iter().position(|h| h.trim() == c).ok_or_else(|| Error::Parse {
            path: name.clone(),
            line: 1,
            message: format!("missing column `{c}`"),
        })
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::from(e).context(name.clone()))?;
        let line = row as u64 + 2;
        let num = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("").trim();
            field.parse().map_err(|_| Error::Parse {
                path: name.clone(),
                line,
                message: format!("cannot parse `{field}` as a number"),
            })
        };
        xs.push(num(ix)?);
        ys.push(num(iy)?);
    }
    Ok((xs, ys))
}

/// Un-normalized F(Delta) for every detuning grid point.
pub fn simulate_signal(model: &FieldModel, params: &OBEParams, constants: &AtomicConstants) -> Result<Vec<f64>> {
    let sim = Simulator::new(model, params, constants)?;
    let velocities = params.velocity.velocities(constants.most_probable_speed(params.temperature_k));
    let weights = maxwell_weights(params.temperature_k, &velocities, constants)?;
    params
        .detuning
        .points()
        .par_iter()
        .map(|&d| {
            sim.doppler_averaged(d, &velocities, &weights)
                .map_err(|e| e.context(format!("detuning {d} MHz")))
        })
        .collect()
}

/// Doppler-averaged fluorescence spectrum at field B, normalized to unit maximum.
pub fn simulate_spectrum(field_t: f64, params: &OBEParams, constants: &AtomicConstants) -> Result<Spectrum> {
    let model = FieldModel::new(field_t, constants)?;
    simulate_spectrum_with(&model, params, constants)
}

pub fn simulate_spectrum_with(model: &FieldModel, params: &OBEParams, constants: &AtomicConstants) -> Result<Spectrum> {
    let signal = simulate_signal(model, params, constants)?;
    let mut spectrum = Spectrum {
        detuning_mhz: params.detuning.points(),
        signal,
        meta: SpectrumMeta {
            field_t: model.field_t,
            params_digest: params.digest(),
            constants_version: constants.version_tag(),
            generator: GENERATOR.to_string(),
            peak_raw: 0.0,
            created: None,
        },
    };
    spectrum.normalize();
    Ok(spectrum)
}

/// One spectrum per (B, params) job, in job order.
pub fn simulate_batch(jobs: &[(f64, OBEParams)], constants: &AtomicConstants) -> Vec<Result<Spectrum>> {
    jobs.iter()
        .map(|(b, p)| simulate_spectrum(*b, p, constants).map_err(|e| e.context(format!("B = {b} T"))))
        .collect()
}
