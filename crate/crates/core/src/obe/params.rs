use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::{AtomicConstants, BasisState, Polarization, EPSILON_0, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::halfint::HalfInt;

/// Which circular components of the input light are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    /// Linear input polarization: sigma+ and sigma- with amplitude E/sqrt(2) each.
    Both,
    SigmaPlus,
    SigmaMinus,
}

impl Drive {
    /// Field amplitude factor for one polarization, 0 if not driven.
    pub fn amplitude(self, polarization: Polarization) -> f64 {
        match (self, polarization) {
            (Drive::Both, Polarization::SigmaPlus | Polarization::SigmaMinus) => std::f64::consts::FRAC_1_SQRT_2,
            (Drive::SigmaPlus, Polarization::SigmaPlus) => 1.0,
            (Drive::SigmaMinus, Polarization::SigmaMinus) => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGrid {
    pub count: usize,
    /// Half-width in most-probable speeds.
    pub span_vp: f64,
}

impl VelocityGrid {
    /// Uniform symmetric grid; v[i] = -v[n-1-i] exactly.
    pub fn velocities(&self, most_probable_speed: f64) -> Vec<f64> {
        let n = self.count;
        let c = (n - 1) as f64 / 2.0;
        let h = self.span_vp * most_probable_speed / c;
        (0..n).map(|i| (i as f64 - c) * h).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningGrid {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub step_mhz: f64,
}

impl DetuningGrid {
    pub fn len(&self) -> usize {
        ((self.max_mhz - self.min_mhz) / self.step_mhz + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.min_mhz + i as f64 * self.step_mhz).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    /// RK4 step in units of tau.
    pub dt_tau: f64,
    /// Total time in units of tau.
    pub t_max_tau: f64,
    /// Trailing fraction of t_max over which populations are averaged.
    pub average_fraction: f64,
    /// Number of standing-wave entry phases k z0 in [0, pi).
    pub phases: usize,
    /// Coherences detuned further than this from the laser are not integrated.
    pub coherence_cutoff_mhz: f64,
    /// Upper bound on the phase any coherence or the standing wave may
    /// advance in one step; dt_tau is reduced per trajectory to respect it.
    #[serde(default = "default_phase_per_step")]
    pub max_phase_per_step: f64,
}

fn default_phase_per_step() -> f64 {
    0.2
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec {
            dt_tau: 0.01,
            t_max_tau: 40.0,
            average_fraction: 0.5,
            phases: 4,
            coherence_cutoff_mhz: 1500.0,
            max_phase_per_step: default_phase_per_step(),
        }
    }
}

/// Largest accepted value of `max_phase_per_step` (RK4 stability is lost near 2.8).
pub const MAX_PHASE_PER_STEP: f64 = 2.0;

/// A single driven transition, named by the dominant characters of its ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSelector {
    pub ground: String,
    pub excited: String,
}

impl LineSelector {
    pub fn new(ground: BasisState, excited: BasisState) -> Self {
        LineSelector {
            ground: ground.to_string(),
            excited: excited.to_string(),
        }
    }

    pub fn states(&self) -> Result<(BasisState, BasisState)> {
        Ok((parse_basis_state(&self.ground)?, parse_basis_state(&self.excited)?))
    }
}

/// Parses `|+3/2,-1/2>`, `+3/2,-1/2` or `1.5,-0.5` into (m_I, m_J).
pub fn parse_basis_state(s: &str) -> Result<BasisState> {
    let inner = s.trim().trim_start_matches('|').trim_end_matches('>').trim();
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("cannot parse basis state `{s}`")));
    }
    let one = |p: &str| -> Result<HalfInt> {
        let p = p.trim_start_matches('+');
        let value = match p.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.parse().map_err(|_| Error::InvalidArgument(format!("bad number in `{s}`")))?;
                let d: f64 = d.parse().map_err(|_| Error::InvalidArgument(format!("bad number in `{s}`")))?;
                n / d
            }
            None => p.parse().map_err(|_| Error::InvalidArgument(format!("bad number in `{s}`")))?,
        };
        HalfInt::from_f64(value)
    };
    Ok(BasisState {
        m_i: one(parts[0])?,
        m_j: one(parts[1])?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OBEParams {
    pub temperature_k: f64,
    /// Peak intensity; alternative to power_w + waist_m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_w_per_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist_m: Option<f64>,
    pub drive: Drive,
    /// Restrict the dynamics to these transitions; empty means all principal lines.
    #[serde(default)]
    pub lines: Vec<LineSelector>,
    /// Replace the standing wave by a uniform field (phi = 1).
    #[serde(default)]
    pub uniform_field: bool,
    pub velocity: VelocityGrid,
    pub detuning: DetuningGrid,
    #[serde(default)]
    pub integration: IntegrationSpec,
}

impl OBEParams {
    /// Defaults: 313 K, 6 mW into a 0.84 mm waist, both sigma components.
    pub fn new(detuning: DetuningGrid) -> Self {
        OBEParams {
            temperature_k: 313.0,
            intensity_w_per_m2: None,
            power_w: Some(6e-3),
            waist_m: Some(0.84e-3),
            drive: Drive::Both,
            lines: Vec::new(),
            uniform_field: false,
            velocity: VelocityGrid { count: 81, span_vp: 4.0 },
            detuning,
            integration: IntegrationSpec::default(),
        }
    }

    pub fn with_intensity(mut self, intensity_w_per_m2: f64) -> Self {
        self.intensity_w_per_m2 = Some(intensity_w_per_m2);
        self.power_w = None;
        self.waist_m = None;
        self
    }

    /// Peak intensity in W/m^2; I = 2P/(pi w0^2) when given as power and waist.
    pub fn intensity(&self) -> Result<f64> {
        match (self.intensity_w_per_m2, self.power_w, self.waist_m) {
            (Some(i), None, None) => Ok(i),
            (None, Some(p), Some(w)) => Ok(2.0 * p / (PI * w * w)),
            _ => Err(Error::Config("give either intensity_w_per_m2 or both power_w and waist_m".into())),
        }
    }

    /// Electric-field amplitude E = sqrt(2 I / (c eps0)) in V/m.
    pub fn electric_field(&self) -> Result<f64> {
        Ok((2.0 * self.intensity()? / (SPEED_OF_LIGHT * EPSILON_0)).sqrt())
    }

    pub fn dt(&self, constants: &AtomicConstants) -> f64 {
        self.integration.dt_tau * constants.lifetime_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return bad(format!("temperature_k must be positive, got {}", self.temperature_k));
        }
        let i = self.intensity()?;
        if !(i >= 0.0 && i.is_finite()) {
            return bad(format!("intensity must be non-negative, got {i}"));
        }
        if let Some(w) = self.waist_m {
            if w <= 0.0 {
                return bad(format!("waist_m must be positive, got {w}"));
            }
        }
        let v = &self.velocity;
        if v.count < 3 || v.count.is_multiple_of(2) {
            return bad(format!("velocity.count must be odd and >= 3, got {}", v.count));
        }
        if !(v.span_vp > 0.0 && v.span_vp.is_finite()) {
            return bad(format!("velocity.span_vp must be positive, got {}", v.span_vp));
        }
        let d = &self.detuning;
        if !(d.step_mhz > 0.0 && d.max_mhz >= d.min_mhz && d.min_mhz.is_finite() && d.max_mhz.is_finite()) {
            return bad(format!(
                "detuning grid must be strictly increasing (min {}, max {}, step {})",
                d.min_mhz, d.max_mhz, d.step_mhz
            ));
        }
        let g = &self.integration;
        if !(g.dt_tau > 0.0 && g.dt_tau <= 1.0 / 50.0 + 1e-15) {
            return bad(format!("integration.dt_tau must be in (0, 1/50], got {}", g.dt_tau));
        }
        if !(g.t_max_tau >= 20.0 && g.t_max_tau.is_finite()) {
            return bad(format!("integration.t_max_tau must be >= 20, got {}", g.t_max_tau));
        }
        if !(g.average_fraction > 0.0 && g.average_fraction <= 1.0) {
            return bad(format!(
                "integration.average_fraction must be in (0, 1], got {}",
                g.average_fraction
            ));
        }
        if g.phases == 0 {
            return bad("integration.phases must be >= 1".into());
        }
        if !(g.coherence_cutoff_mhz > 0.0) {
            return bad(format!(
                "integration.coherence_cutoff_mhz must be positive, got {}",
                g.coherence_cutoff_mhz
            ));
        }
        if !(g.max_phase_per_step > 0.0 && g.max_phase_per_step <= MAX_PHASE_PER_STEP) {
            return bad(format!(
                "integration.max_phase_per_step must be in (0, {MAX_PHASE_PER_STEP}], got {}",
                g.max_phase_per_step
            ));
        }
        for line in &self.lines {
            line.states()?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical TOML serialization.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("params serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Omega = C sqrt(3 pi eps0 / (k^3 tau hbar)) E, in rad/s.
pub fn rabi_frequency(coupling: f64, field_v_per_m: f64, constants: &AtomicConstants) -> f64 {
    let k = constants.wavevector();
    coupling * (3.0 * PI * EPSILON_0 / (k.powi(3) * constants.lifetime_s * crate::atomic::HBAR)).sqrt() * field_v_per_m
}

/// Normalized 1-D Maxwell-Boltzmann weights on a velocity grid.
pub fn maxwell_weights(temperature_k: f64, velocities: &[f64], constants: &AtomicConstants) -> Result<Vec<f64>> {
    if !(temperature_k > 0.0 && temperature_k.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature_k}")));
    }
    let vp = constants.most_probable_speed(temperature_k);
    let raw: Vec<f64> = velocities.iter().map(|v| (-(v / vp).powi(2)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}
