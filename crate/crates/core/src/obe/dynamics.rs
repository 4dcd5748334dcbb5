use std::f64::consts::PI;

use num_complex::Complex64;

use crate::atomic::{AtomicConstants, FieldModel, Polarization, Transition};
use crate::error::{Error, Result};

use super::params::{rabi_frequency, OBEParams};

/// Tolerance of the trace and positivity checks.
pub const INVARIANT_TOLERANCE: f64 = 1e-9;

/// Upper bound on RK4 steps per integration.
pub const MAX_STEPS: u64 = 50_000_000;

/// Populations and the optical coherences of the principal lines.
#[derive(Clone, Debug, PartialEq)]
pub struct OBEState {
    pub ground: Vec<f64>,
    pub excited: Vec<f64>,
    /// Ordered as [`coherence_lines`].
    pub coherences: Vec<Complex64>,
}

impl OBEState {
    /// Uniform population over the ground sublevels, nothing else.
    pub fn thermal(model: &FieldModel) -> Self {
        let ng = model.ground.len();
        OBEState {
            ground: vec![1.0 / ng as f64; ng],
            excited: vec![0.0; model.excited.len()],
            coherences: vec![Complex64::new(0.0, 0.0); coherence_lines(model).len()],
        }
    }

    pub fn trace(&self) -> f64 {
        self.ground.iter().sum::<f64>() + self.excited.iter().sum::<f64>()
    }

    /// Checks trace, population bounds and |rho_ba|^2 <= rho_aa rho_bb.
    pub fn check(&self, model: &FieldModel, tolerance: f64) -> std::result::Result<(), String> {
        let trace = self.trace();
        if (trace - 1.0).abs() > tolerance {
            return Err(format!("trace {trace}"));
        }
        for &p in self.ground.iter().chain(&self.excited) {
            if !(-tolerance..=1.0 + tolerance).contains(&p) {
                return Err(format!("population {p} out of [0, 1]"));
            }
        }
        for (c, line) in self.coherences.iter().zip(coherence_lines(model)) {
            let bound = self.ground[line.ground] * self.excited[line.excited];
            if c.norm_sqr() > bound + tolerance {
                return Err(format!("coherence {} exceeds sqrt(rho_aa rho_bb)", line.label()));
            }
        }
        Ok(())
    }
}

/// The 16 principal lines whose coherences are kept: sigma- then sigma+,
/// each sorted by detuning.
pub fn coherence_lines(model: &FieldModel) -> Vec<Transition> {
    let mut lines = model.principal_lines(Polarization::SigmaMinus);
    lines.extend(model.principal_lines(Polarization::SigmaPlus));
    lines
}

#[derive(Clone, Debug)]
struct DrivenLine {
    slot: usize,
    ground: usize,
    excited: usize,
    /// Omega tau.
    omega: f64,
    detuning_mhz: f64,
}

#[derive(Clone, Copy, Debug)]
struct Coherence {
    ground: usize,
    excited: usize,
    omega: f64,
    /// (omega_ba - omega) tau.
    delta: f64,
}

/// The part of the level scheme touched at one laser detuning. State
/// layout: tracked ground populations, one lump holding every untracked
/// ground sublevel, active excited populations, then (re, im) of every
/// active coherence. Untracked ground levels only receive decay, so lumping
/// them changes nothing else.
#[derive(Clone, Debug)]
struct LineSystem {
    grounds: Vec<usize>,
    excited: Vec<usize>,
    coherences: Vec<Coherence>,
    slots: Vec<usize>,
    /// (local excited, local ground or lump, branching ratio)
    decay: Vec<(usize, usize, f64)>,
}

impl LineSystem {
    /// Ground slots including the lump.
    fn n_ground(&self) -> usize {
        self.grounds.len() + 1
    }

    fn n_populations(&self) -> usize {
        self.n_ground() + self.excited.len()
    }

    fn dim(&self) -> usize {
        self.n_populations() + 2 * self.coherences.len()
    }

    #[inline]
    fn derivative(&self, phi: f64, y: &[f64], dy: &mut [f64]) {
        let ng = self.n_ground();
        let off = self.n_populations();
        dy[..off].fill(0.0);
        for e in 0..self.excited.len() {
            dy[ng + e] = -y[ng + e];
        }
        for &(e, g, d) in &self.decay {
            dy[g] += d * y[ng + e];
        }
        for (k, c) in self.coherences.iter().enumerate() {
            let re = y[off + 2 * k];
            let im = y[off + 2 * k + 1];
            let w = c.omega * phi;
            let flow = 2.0 * w * im;
            dy[c.ground] += flow;
            dy[ng + c.excited] -= flow;
            let inversion = y[ng + c.excited] - y[c.ground];
            dy[off + 2 * k] = c.delta * im - 0.5 * re;
            dy[off + 2 * k + 1] = w * inversion - c.delta * re - 0.5 * im;
        }
    }

    fn pack(&self, state: &OBEState) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        y.extend(self.grounds.iter().map(|&a| state.ground[a]));
        let lump: f64 = (0..state.ground.len())
            .filter(|a| !self.grounds.contains(a))
            .map(|a| state.ground[a])
            .sum();
        y.push(lump);
        y.extend(self.excited.iter().map(|&b| state.excited[b]));
        for &slot in &self.slots {
            let c = state.coherences[slot];
            y.push(c.re);
            y.push(c.im);
        }
        y
    }

    /// Inverse of `pack` for systems that track every ground level.
    fn unpack(&self, y: &[f64], n_ground: usize, n_excited: usize, n_coherences: usize) -> OBEState {
        let ng = self.n_ground();
        let mut ground = vec![0.0; n_ground];
        for (g, &a) in self.grounds.iter().enumerate() {
            ground[a] = y[g];
        }
        let mut excited = vec![0.0; n_excited];
        for (e, &b) in self.excited.iter().enumerate() {
            excited[b] = y[ng + e];
        }
        let mut coherences = vec![Complex64::new(0.0, 0.0); n_coherences];
        let off = self.n_populations();
        for (k, &slot) in self.slots.iter().enumerate() {
            coherences[slot] = Complex64::new(y[off + 2 * k], y[off + 2 * k + 1]);
        }
        OBEState {
            ground,
            excited,
            coherences,
        }
    }
}

/// Precomputed per-field data for repeated integrations.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    model: &'a FieldModel,
    params: &'a OBEParams,
    /// Every principal line; omega is 0 for those not driven.
    lines: Vec<DrivenLine>,
    n_lines: usize,
    wavevector: f64,
    tau: f64,
    /// sum_a C^2_ba for each excited state.
    emission: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a FieldModel, params: &'a OBEParams, constants: &AtomicConstants) -> Result<Self> {
        params.validate()?;
        let field = params.electric_field()?;
        let selected = params.lines.iter().map(|l| l.states()).collect::<Result<Vec<_>>>()?;
        let all = coherence_lines(model);
        let mut lines = Vec::new();
        for (slot, t) in all.iter().enumerate() {
            let chosen = selected.is_empty() || selected.contains(&(t.ground_label, t.excited_label));
            let amplitude = if chosen { params.drive.amplitude(t.polarization) } else { 0.0 };
            lines.push(DrivenLine {
                slot,
                ground: t.ground,
                excited: t.excited,
                omega: rabi_frequency(t.coupling, amplitude * field, constants) * constants.lifetime_s,
                detuning_mhz: t.detuning_mhz,
            });
        }
        for (g, e) in &selected {
            if !all.iter().any(|t| (t.ground_label, t.excited_label) == (*g, *e)) {
                return Err(Error::Config(format!("selected line {g}->{e} is not a principal sigma line")));
            }
        }
        let emission = (0..model.excited.len()).map(|b| model.branching.row(b).sum()).collect();
        Ok(Simulator {
            model,
            params,
            lines,
            n_lines: all.len(),
            wavevector: constants.wavevector(),
            tau: constants.lifetime_s,
            emission,
        })
    }

    pub fn model(&self) -> &FieldModel {
        self.model
    }

    /// Detunings (MHz) of the lines actually driven.
    pub fn driven_detunings(&self) -> Vec<f64> {
        self.lines.iter().filter(|l| l.omega != 0.0).map(|l| l.detuning_mhz).collect()
    }

    fn system(&self, detuning_mhz: f64, cutoff_mhz: Option<f64>, extra: Option<&OBEState>) -> LineSystem {
        fn local(list: &mut Vec<usize>, x: usize) -> usize {
            match list.iter().position(|&y| y == x) {
                Some(i) => i,
                None => {
                    list.push(x);
                    list.len() - 1
                }
            }
        }
        let mut grounds: Vec<usize> = Vec::new();
        let mut excited: Vec<usize> = Vec::new();
        let mut coherences = Vec::new();
        let mut slots = Vec::new();
        if extra.is_some() {
            grounds.extend(0..self.model.ground.len());
        }
        for line in &self.lines {
            let mismatch = line.detuning_mhz - detuning_mhz;
            let nonzero = extra.is_some_and(|s| s.coherences[line.slot].norm_sqr() > 0.0);
            let idle = line.omega == 0.0 || cutoff_mhz.is_some_and(|c| mismatch.abs() > c);
            if idle && !nonzero {
                continue;
            }
            coherences.push(Coherence {
                ground: local(&mut grounds, line.ground),
                excited: local(&mut excited, line.excited),
                omega: line.omega,
                delta: 2.0 * PI * mismatch * 1e6 * self.tau,
            });
            slots.push(line.slot);
        }
        if let Some(s) = extra {
            for (b, &p) in s.excited.iter().enumerate() {
                if p != 0.0 {
                    local(&mut excited, b);
                }
            }
        }
        let lump = grounds.len();
        let mut decay = Vec::new();
        for (e, &b) in excited.iter().enumerate() {
            for a in 0..self.model.ground.len() {
                let d = self.model.branching[(b, a)];
                if d > 0.0 {
                    let g = grounds.iter().position(|&x| x == a).unwrap_or(lump);
                    decay.push((e, g, d));
                }
            }
        }
        LineSystem {
            grounds,
            excited,
            coherences,
            slots,
            decay,
        }
    }

    /// d(state)/dt in 1/s with every driven coherence active.
    pub fn derivative(&self, state: &OBEState, t_s: f64, velocity: f64, detuning_mhz: f64) -> Result<OBEState> {
        let sys = self.system(detuning_mhz, None, Some(state));
        let y = sys.pack(state);
        let mut dy = vec![0.0; y.len()];
        let phi = self.phi(velocity, 0.0, t_s / self.tau);
        sys.derivative(phi, &y, &mut dy);
        for d in dy.iter_mut() {
            *d /= self.tau;
        }
        let out = sys.unpack(&dy, state.ground.len(), state.excited.len(), self.n_lines);
        if out.trace().is_nan() || out.coherences.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite {
                velocity,
                detuning: detuning_mhz,
                time: t_s,
            });
        }
        Ok(out)
    }

    /// Standing-wave factor cos(k z0 + k v t) at dimensionless time t / tau.
    #[inline]
    fn phi(&self, velocity: f64, entry_phase: f64, t: f64) -> f64 {
        if self.params.uniform_field {
            1.0
        } else {
            (entry_phase + self.wavevector * velocity * self.tau * t).cos()
        }
    }

    fn entry_phases(&self) -> Vec<f64> {
        if self.params.uniform_field {
            return vec![0.0];
        }
        let n = self.params.integration.phases;
        (0..n).map(|j| PI * j as f64 / n as f64).collect()
    }

    /// Excited populations averaged over the trailing window and the entry
    /// phases. Integrates only the coherences within the cutoff plus any
    /// that are nonzero in `state0`.
    pub fn integrate(&self, state0: &OBEState, velocity: f64, detuning_mhz: f64) -> Result<Vec<f64>> {
        let sys = self.system(detuning_mhz, Some(self.params.integration.coherence_cutoff_mhz), Some(state0));
        self.integrate_system(&sys, state0, velocity, detuning_mhz)
    }

    fn integrate_system(&self, sys: &LineSystem, state0: &OBEState, velocity: f64, detuning_mhz: f64) -> Result<Vec<f64>> {
        let spec = &self.params.integration;
        // Shorten the step for this trajectory so the fastest rotation
        // advances at most max_phase_per_step per step.
        let kv_signed = self.wavevector * velocity * self.tau;
        let kv = if self.params.uniform_field { 0.0 } else { kv_signed.abs() };
        let rate = sys
            .coherences
            .iter()
            .map(|c| c.delta.abs() + kv + c.omega.abs())
            .fold(0.0, f64::max);
        let dt = if rate > 0.0 {
            spec.dt_tau.min(spec.max_phase_per_step / rate)
        } else {
            spec.dt_tau
        };
        let steps_f = (spec.t_max_tau / dt).ceil();
        if steps_f > MAX_STEPS as f64 {
            return Err(Error::StepOverflow {
                steps: steps_f as u64,
                limit: MAX_STEPS,
            });
        }
        let steps = steps_f as u64;
        let window = ((spec.average_fraction * steps as f64).round() as u64).clamp(1, steps);
        let start = steps - window;
        let h = spec.t_max_tau / steps as f64;
        let phases = self.entry_phases();
        let ng = sys.n_ground();
        let ne = sys.excited.len();
        let n = sys.dim();
        let y0 = sys.pack(state0);
        let mut total = vec![0.0; ne];
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for &z0 in &phases {
            let mut y = y0.clone();
            let mut acc = vec![0.0; ne];
            let mut wave = Wave::new(z0, if self.params.uniform_field { None } else { Some(kv_signed * h) });
            for step in 0..steps {
                let t = step as f64 * h;
                if step % 1024 == 0 {
                    wave.sync(z0 + kv_signed * t);
                }
                let (p0, pm, p1) = wave.advance();
                sys.derivative(p0, &y, &mut k1);
                for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k1) {
                    *t = y + 0.5 * h * k;
                }
                sys.derivative(pm, &tmp, &mut k2);
                for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k2) {
                    *t = y + 0.5 * h * k;
                }
                sys.derivative(pm, &tmp, &mut k3);
                for ((t, y), k) in tmp.iter_mut().zip(&y).zip(&k3) {
                    *t = y + h * k;
                }
                sys.derivative(p1, &tmp, &mut k4);
                for (i, y) in y.iter_mut().enumerate() {
                    *y += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
                self.check_step(sys, &y, velocity, detuning_mhz, (t + h) * self.tau)?;
                if step >= start {
                    for e in 0..ne {
                        acc[e] += y[ng + e];
                    }
                }
            }
            for e in 0..ne {
                total[e] += acc[e] / window as f64;
            }
        }
        let mut out = vec![0.0; self.model.excited.len()];
        for (e, &b) in sys.excited.iter().enumerate() {
            out[b] = total[e] / phases.len() as f64;
        }
        Ok(out)
    }

    #[inline]
    fn check_step(&self, sys: &LineSystem, y: &[f64], velocity: f64, detuning: f64, time: f64) -> Result<()> {
        let ng = sys.n_ground();
        let npop = sys.n_populations();
        let mut trace = 0.0;
        let mut bad_population = false;
        for &p in &y[..npop] {
            trace += p;
            bad_population |= !(-INVARIANT_TOLERANCE..=1.0 + INVARIANT_TOLERANCE).contains(&p);
        }
        if !trace.is_finite() {
            return Err(Error::NonFinite { velocity, detuning, time });
        }
        let violation = |what: String| Error::InvariantViolated { velocity, detuning, what };
        if (trace - 1.0).abs() > INVARIANT_TOLERANCE {
            return Err(violation(format!("trace {trace} at t = {time:.3e} s")));
        }
        if bad_population {
            let (slot, value) = y[..npop]
                .iter()
                .enumerate()
                .map(|(i, &p)| (i, p.min(1.0 - p)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| (i, y[i]))
                .unwrap_or_default();
            let level = if slot < ng { "ground" } else { "excited" };
            return Err(violation(format!(
                "{level} population {value:.3e} (slot {slot}) out of [0, 1] at t = {time:.3e} s"
            )));
        }
        for (k, c) in sys.coherences.iter().enumerate() {
            let (re, im) = (y[npop + 2 * k], y[npop + 2 * k + 1]);
            let excess = re * re + im * im - y[c.ground] * y[ng + c.excited];
            if excess > INVARIANT_TOLERANCE {
                return Err(violation(format!(
                    "|rho_ba|^2 exceeds rho_aa rho_bb by {excess:.2e} at t = {time:.3e} s"
                )));
            }
        }
        Ok(())
    }

    /// Emission-weighted, phase- and window-averaged excited population for
    /// one velocity class from the thermal state.
    pub fn fluorescence(&self, velocity: f64, detuning_mhz: f64) -> Result<f64> {
        let sys = self.system(detuning_mhz, Some(self.params.integration.coherence_cutoff_mhz), None);
        if sys.coherences.is_empty() {
            return Ok(0.0);
        }
        let state0 = OBEState::thermal(self.model);
        let rho = self.integrate_system(&sys, &state0, velocity, detuning_mhz)?;
        Ok(rho.iter().zip(&self.emission).map(|(r, w)| r * w).sum())
    }

    /// Doppler-averaged signal at one detuning. Uses f(v) = f(-v) and the
    /// v -> -v symmetry of the phase-averaged solution to integrate only v >= 0.
    pub fn doppler_averaged(&self, detuning_mhz: f64, velocities: &[f64], weights: &[f64]) -> Result<f64> {
        if self.params.uniform_field {
            return self.fluorescence(0.0, detuning_mhz);
        }
        let mut f = 0.0;
        for (&v, &w) in velocities.iter().zip(weights) {
            if v < 0.0 {
                continue;
            }
            let factor = if v > 0.0 { 2.0 } else { 1.0 };
            f += factor * w * self.fluorescence(v, detuning_mhz)?;
        }
        Ok(f)
    }
}

/// cos(theta) sampled at the start, middle and end of each RK4 step by
/// rotation instead of repeated cos calls.
struct Wave {
    uniform: bool,
    c: f64,
    s: f64,
    ch: f64,
    sh: f64,
}

impl Wave {
    fn new(theta0: f64, phase_per_step: Option<f64>) -> Self {
        let half = phase_per_step.unwrap_or(0.0) / 2.0;
        Wave {
            uniform: phase_per_step.is_none(),
            c: theta0.cos(),
            s: theta0.sin(),
            ch: half.cos(),
            sh: half.sin(),
        }
    }

    fn sync(&mut self, theta: f64) {
        self.c = theta.cos();
        self.s = theta.sin();
    }

    #[inline]
    fn advance(&mut self) -> (f64, f64, f64) {
        if self.uniform {
            return (1.0, 1.0, 1.0);
        }
        let (c0, s0) = (self.c, self.s);
        let (cm, sm) = (c0 * self.ch - s0 * self.sh, s0 * self.ch + c0 * self.sh);
        let (c1, s1) = (cm * self.ch - sm * self.sh, sm * self.ch + cm * self.sh);
        self.c = c1;
        self.s = s1;
        (c0, cm, c1)
    }
}

/// Right-hand side of the optical Bloch equations, in 1/s.
pub fn obe_derivative(
    state: &OBEState,
    t_s: f64,
    velocity: f64,
    detuning_mhz: f64,
    model: &FieldModel,
    params: &OBEParams,
    constants: &AtomicConstants,
) -> Result<OBEState> {
    Simulator::new(model, params, constants)?.derivative(state, t_s, velocity, detuning_mhz)
}

/// Time-, window- and phase-averaged excited populations rho^avg_bb(v, Delta).
pub fn integrate(
    state0: &OBEState,
    velocity: f64,
    detuning_mhz: f64,
    model: &FieldModel,
    params: &OBEParams,
    constants: &AtomicConstants,
) -> Result<Vec<f64>> {
    Simulator::new(model, params, constants)?.integrate(state0, velocity, detuning_mhz)
}
