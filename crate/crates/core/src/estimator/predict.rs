use crate::analysis::{format_label, TransitionLabel};
use crate::atomic::{AtomicConstants, Manifold, ZeemanEigensystem};
use crate::error::{Error, Result};

/// Line detunings of fixed dominant-character transitions as functions of B.
#[derive(Clone, Debug)]
pub struct LinePredictor<'a> {
    constants: &'a AtomicConstants,
    labels: Vec<TransitionLabel>,
}

impl<'a> LinePredictor<'a> {
    pub fn new(labels: Vec<TransitionLabel>, constants: &'a AtomicConstants) -> Self {
        LinePredictor { constants, labels }
    }

    pub fn labels(&self) -> &[TransitionLabel] {
        &self.labels
    }

    fn systems(&self, field_t: f64) -> Result<(ZeemanEigensystem, ZeemanEigensystem)> {
        Ok((
            ZeemanEigensystem::compute(Manifold::Ground, field_t, self.constants)?,
            ZeemanEigensystem::compute(Manifold::Excited, field_t, self.constants)?,
        ))
    }

    fn indices(&self, g: &ZeemanEigensystem, e: &ZeemanEigensystem, label: &TransitionLabel) -> Result<(usize, usize)> {
        match (g.index_of(label.0), e.index_of(label.1)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidArgument(format!(
                "no transition {} in the model",
                format_label(label)
            ))),
        }
    }

    /// Detunings in MHz, in label order.
    pub fn detunings(&self, field_t: f64) -> Result<Vec<f64>> {
        let (g, e) = self.systems(field_t)?;
        self.labels
            .iter()
            .map(|l| {
                let (a, b) = self.indices(&g, &e, l)?;
                Ok(e.energies_mhz[b] - g.energies_mhz[a])
            })
            .collect()
    }

    /// dν/dB in MHz/T from the Hellmann-Feynman theorem.
    pub fn slopes(&self, field_t: f64) -> Result<Vec<f64>> {
        let (g, e) = self.systems(field_t)?;
        let c = self.constants;
        let zeeman_slope = |sys: &ZeemanEigensystem, i: usize| -> f64 {
            let gj = c.g_j(sys.manifold);
            sys.labels
                .iter()
                .enumerate()
                .map(|(k, l)| sys.vectors[(k, i)].powi(2) * (gj * l.m_j.value() + c.g_i * l.m_i.value()))
                .sum::<f64>()
                * c.mu_b_over_h_mhz_per_tesla
        };
        self.labels
            .iter()
            .map(|l| {
                let (a, b) = self.indices(&g, &e, l)?;
                Ok(zeeman_slope(&e, b) - zeeman_slope(&g, a))
            })
            .collect()
    }
}
