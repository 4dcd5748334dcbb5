//! Reduced optical Bloch equations for the principal sigma lines, RK4
//! integration along the standing wave, and Doppler-averaged spectra.

mod dynamics;
mod params;
mod spectrum;

pub use dynamics::{coherence_lines, integrate, obe_derivative, OBEState, Simulator, INVARIANT_TOLERANCE, MAX_STEPS};
pub use params::{
    maxwell_weights, parse_basis_state, rabi_frequency, DetuningGrid, Drive, IntegrationSpec, LineSelector, OBEParams, VelocityGrid,
    MAX_PHASE_PER_STEP,
};
pub use spectrum::{simulate_batch, simulate_signal, simulate_spectrum, simulate_spectrum_with, Spectrum, SpectrumMeta, GENERATOR};
