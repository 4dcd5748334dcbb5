use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halfint::HalfInt;

use super::Manifold;

pub const SUPPORTED_SCHEMA_VERSION: u32 = 1;

/// Shipped Rb-87 D2 constants file.
pub const RB87_D2_TOML: &str = include_str!("../../data/rb87_d2.toml");

pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Isotope-level constants for one alkali D line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicConstants {
    pub schema_version: u32,
    pub isotope: String,
    pub nuclear_spin: f64,
    pub j_ground: f64,
    pub j_excited: f64,
    pub a_ground_mhz: f64,
    pub a_excited_mhz: f64,
    pub b_excited_mhz: f64,
    pub g_j_ground: f64,
    pub g_j_excited: f64,
    pub g_i: f64,
    pub mu_b_over_h_mhz_per_tesla: f64,
    pub lifetime_s: f64,
    pub wavelength_m: f64,
    pub center_frequency_hz: f64,
    pub saturation_intensity_w_per_m2: f64,
    pub mass_kg: f64,
}

impl AtomicConstants {
    pub fn rb87() -> Self {
        Self::from_toml_str(RB87_D2_TOML).expect("shipped constants file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let constants: AtomicConstants = toml::from_str(text).map_err(|e| Error::Config(format!("constants: {e}")))?;
        constants.validate()?;
        Ok(constants)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SUPPORTED_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "constants schema version {} is not supported (expected {SUPPORTED_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, value) in [
            ("nuclear_spin", self.nuclear_spin),
            ("j_ground", self.j_ground),
            ("j_excited", self.j_excited),
        ] {
            let h = HalfInt::from_f64(value).map_err(|_| Error::Config(format!("{name} = {value} is not a half-integer")))?;
            if h.twice() < 0 {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        for (name, value) in [
            ("lifetime_s", self.lifetime_s),
            ("wavelength_m", self.wavelength_m),
            ("saturation_intensity_w_per_m2", self.saturation_intensity_w_per_m2),
            ("mass_kg", self.mass_kg),
            ("mu_b_over_h_mhz_per_tesla", self.mu_b_over_h_mhz_per_tesla),
            ("center_frequency_hz", self.center_frequency_hz),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Identifier recorded in output metadata.
    pub fn version_tag(&self) -> String {
        format!("{}-schema{}", self.isotope, self.schema_version)
    }

    pub fn nuclear_spin(&self) -> HalfInt {
        HalfInt::from_f64(self.nuclear_spin).expect("validated")
    }

    pub fn electronic_j(&self, manifold: Manifold) -> HalfInt {
        let j = match manifold {
            Manifold::Ground => self.j_ground,
            Manifold::Excited => self.j_excited,
        };
        HalfInt::from_f64(j).expect("validated")
    }

    /// (2I+1)(2J+1)
    pub fn dimension(&self, manifold: Manifold) -> usize {
        self.nuclear_spin().multiplicity() * self.electronic_j(manifold).multiplicity()
    }

    pub fn hyperfine_a_mhz(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Ground => self.a_ground_mhz,
            Manifold::Excited => self.a_excited_mhz,
        }
    }

    /// Quadrupole constant; the ground J = 1/2 manifold has none.
    pub fn hyperfine_b_mhz(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Ground => 0.0,
            Manifold::Excited => self.b_excited_mhz,
        }
    }

    pub fn g_j(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Ground => self.g_j_ground,
            Manifold::Excited => self.g_j_excited,
        }
    }

    /// Transition wavevector k (rad/m).
    pub fn wavevector(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }

    /// Zero-detuning anchor omega0 (rad/s).
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.center_frequency_hz
    }

    /// Natural decay rate Gamma = 1/tau (1/s).
    pub fn gamma(&self) -> f64 {
        1.0 / self.lifetime_s
    }

    /// Natural linewidth Gamma / 2 pi in MHz.
    pub fn natural_linewidth_mhz(&self) -> f64 {
        self.gamma() / (2.0 * PI) / 1e6
    }

    /// Most probable speed sqrt(2 kB T / m) (m/s).
    pub fn most_probable_speed(&self, temperature_k: f64) -> f64 {
        (2.0 * BOLTZMANN * temperature_k / self.mass_kg).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_parses() {
        let c = AtomicConstants::rb87();
        assert_eq!(c.dimension(Manifold::Ground), 8);
        assert_eq!(c.dimension(Manifold::Excited), 16);
        assert_eq!(c.version_tag(), "Rb87-schema1");
        assert!((c.wavevector() - 8.0528e6).abs() < 1e3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{RB87_D2_TOML}\nextra_key = 1.0\n");
        assert!(matches!(AtomicConstants::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_are_rejected() {
        let text = RB87_D2_TOML.replace("lifetime_s = 26.2348e-9", "lifetime_s = -1.0");
        assert!(AtomicConstants::from_toml_str(&text).is_err());
        let text = RB87_D2_TOML.replace("nuclear_spin = 1.5", "nuclear_spin = 1.25");
        assert!(AtomicConstants::from_toml_str(&text).is_err());
        let text = RB87_D2_TOML.replace("schema_version = 1", "schema_version = 7");
        assert!(AtomicConstants::from_toml_str(&text).is_err());
    }

    #[test]
    fn saturation_intensity_matches_two_level_definition() {
        // I_sat = hbar c k^3 / (12 pi tau)
        let c = AtomicConstants::rb87();
        let k = c.wavevector();
        let isat = HBAR * SPEED_OF_LIGHT * k.powi(3) / (12.0 * PI * c.lifetime_s);
        assert!((isat / c.saturation_intensity_w_per_m2 - 1.0).abs() < 1e-4, "{isat}");
    }
}
