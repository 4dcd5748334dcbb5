//! Field-dependent level structure of the D2 line in the uncoupled
//! |m_I, m_J> basis and the resulting optical transitions.

pub mod angular;
mod constants;
mod eigen;
mod hamiltonian;
mod transitions;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use angular::{dipole_angular_factor, wigner_3j, wigner_3j_half};
pub use constants::{AtomicConstants, BOLTZMANN, EPSILON_0, HBAR, RB87_D2_TOML, SPEED_OF_LIGHT, SUPPORTED_SCHEMA_VERSION};
pub use eigen::{diagonalize, ZeemanEigensystem};
pub use hamiltonian::{basis_states, build_hamiltonian, BasisState};
pub use transitions::{coupling_matrix, transition_table, FieldModel, Polarization, Transition, TransitionTable, DEFAULT_COUPLING_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Manifold {
    Ground,
    Excited,
}

impl FromStr for Manifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ground" | "g" => Ok(Manifold::Ground),
            "excited" | "e" => Ok(Manifold::Excited),
            other => Err(Error::UnknownManifold(other.to_string())),
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Manifold::Ground => "ground",
            Manifold::Excited => "excited",
        })
    }
}
