use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::halfint::HalfInt;

use super::angular::dipole_angular_factor;
use super::eigen::ZeemanEigensystem;
use super::hamiltonian::BasisState;
use super::{AtomicConstants, Manifold};

/// Rows with |C| at or below this floor are left out of tables.
pub const DEFAULT_COUPLING_FLOOR: f64 = 1e-6;

/// Photon helicity in the atomic frame, q = m_J' - m_J.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    SigmaMinus,
    Pi,
    SigmaPlus,
}

impl Polarization {
    pub const ALL: [Polarization; 3] = [Polarization::SigmaMinus, Polarization::Pi, Polarization::SigmaPlus];
    pub const SIGMA: [Polarization; 2] = [Polarization::SigmaMinus, Polarization::SigmaPlus];

    pub fn q(self) -> i32 {
        match self {
            Polarization::SigmaMinus => -1,
            Polarization::Pi => 0,
            Polarization::SigmaPlus => 1,
        }
    }

    pub fn from_q(q: i32) -> Result<Self> {
        match q {
            -1 => Ok(Polarization::SigmaMinus),
            0 => Ok(Polarization::Pi),
            1 => Ok(Polarization::SigmaPlus),
            _ => Err(Error::InvalidArgument(format!("polarization q must be -1, 0 or +1, got {q}"))),
        }
    }

    fn slot(self) -> usize {
        (self.q() + 1) as usize
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::SigmaMinus => "sigma-",
            Polarization::Pi => "pi",
            Polarization::SigmaPlus => "sigma+",
        })
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigma-" | "-1" | "s-" => Ok(Polarization::SigmaMinus),
            "pi" | "0" => Ok(Polarization::Pi),
            "sigma+" | "+1" | "1" | "s+" => Ok(Polarization::SigmaPlus),
            other => Err(Error::InvalidArgument(format!("unknown polarization `{other}`"))),
        }
    }
}

fn max_m_j(labels: &[BasisState]) -> HalfInt {
    labels.iter().map(|l| l.m_j).max().unwrap_or(HalfInt::ZERO)
}

/// Angular coupling C_{beta alpha} for one polarization: the bare
/// |J m_J> -> |J' m_J'> factor contracted with both eigenvector expansions.
///
/// Rows index excited eigenstates, columns ground eigenstates. Summing C^2
/// over all three polarizations and all ground states gives 1 for every row.
pub fn coupling_matrix(ground: &ZeemanEigensystem, excited: &ZeemanEigensystem, polarization: Polarization) -> Result<DMatrix<f64>> {
    if ground.field_t != excited.field_t {
        return Err(Error::FieldMismatch {
            ground: ground.field_t,
            excited: excited.field_t,
        });
    }
    if ground.manifold != Manifold::Ground || excited.manifold != Manifold::Excited {
        return Err(Error::InvalidArgument(
            "coupling_matrix expects (ground, excited) eigensystems".into(),
        ));
    }
    let q = polarization.q();
    let j_g = max_m_j(&ground.labels);
    let j_e = max_m_j(&excited.labels);

    // bare-basis dipole factors, excited rows x ground columns
    let bare = DMatrix::from_fn(excited.len(), ground.len(), |b, a| {
        let (e, g) = (excited.labels[b], ground.labels[a]);
        if e.m_i != g.m_i || (e.m_j - g.m_j).twice() != 2 * q {
            0.0
        } else {
            dipole_angular_factor(j_g, g.m_j, j_e, e.m_j, q)
        }
    });
    Ok(excited.vectors.transpose() * bare * &ground.vectors)
}

/// Everything the dynamics needs at one field: eigenstates, couplings for
/// each polarization, and the decay branching matrix.
#[derive(Clone, Debug)]
pub struct FieldModel {
    pub field_t: f64,
    pub ground: ZeemanEigensystem,
    pub excited: ZeemanEigensystem,
    couplings: [DMatrix<f64>; 3],
    /// sum_q C^2, rows excited, columns ground; each row sums to 1.
    pub branching: DMatrix<f64>,
}

impl FieldModel {
    pub fn new(field_t: f64, constants: &AtomicConstants) -> Result<Self> {
        let ground = ZeemanEigensystem::compute(Manifold::Ground, field_t, constants)?;
        let excited = ZeemanEigensystem::compute(Manifold::Excited, field_t, constants)?;
        let couplings = [
            coupling_matrix(&ground, &excited, Polarization::SigmaMinus)?,
            coupling_matrix(&ground, &excited, Polarization::Pi)?,
            coupling_matrix(&ground, &excited, Polarization::SigmaPlus)?,
        ];
        let branching = couplings[0].component_mul(&couplings[0])
            + couplings[1].component_mul(&couplings[1])
            + couplings[2].component_mul(&couplings[2]);
        Ok(FieldModel {
            field_t,
            ground,
            excited,
            couplings,
            branching,
        })
    }

    pub fn coupling(&self, polarization: Polarization) -> &DMatrix<f64> {
        &self.couplings[polarization.slot()]
    }

    /// Transition frequency relative to omega0, MHz.
    pub fn detuning_mhz(&self, excited: usize, ground: usize) -> f64 {
        self.excited.energies_mhz[excited] - self.ground.energies_mhz[ground]
    }

    fn transition(&self, excited: usize, ground: usize, polarization: Polarization) -> Transition {
        Transition {
            ground,
            excited,
            polarization,
            detuning_mhz: self.detuning_mhz(excited, ground),
            coupling: self.coupling(polarization)[(excited, ground)],
            ground_label: self.ground.dominant(ground),
            excited_label: self.excited.dominant(excited),
        }
    }

    /// The nuclear-spectator lines of one sigma polarization: dominant
    /// characters with equal m_I and m_J' = m_J + q. These are the
    /// transitions whose optical coherences the dynamics keeps.
    pub fn principal_lines(&self, polarization: Polarization) -> Vec<Transition> {
        let q2 = 2 * polarization.q();
        let mut out = Vec::new();
        for a in 0..self.ground.len() {
            let g = self.ground.dominant(a);
            for b in 0..self.excited.len() {
                let e = self.excited.dominant(b);
                if e.m_i == g.m_i && (e.m_j - g.m_j).twice() == q2 {
                    out.push(self.transition(b, a, polarization));
                }
            }
        }
        out.sort_by(|x, y| x.detuning_mhz.total_cmp(&y.detuning_mhz));
        out
    }

    /// Both sigma manifolds of principal lines, sorted by detuning.
    pub fn principal_sigma_lines(&self) -> Vec<Transition> {
        let mut all = self.principal_lines(Polarization::SigmaMinus);
        all.extend(self.principal_lines(Polarization::SigmaPlus));
        all.sort_by(|x, y| x.detuning_mhz.total_cmp(&y.detuning_mhz));
        all
    }

    pub fn table(&self, floor: f64) -> TransitionTable {
        let mut rows = Vec::new();
        for polarization in Polarization::SIGMA {
            let c = self.coupling(polarization);
            for b in 0..self.excited.len() {
                for a in 0..self.ground.len() {
                    if c[(b, a)].abs() > floor {
                        rows.push(self.transition(b, a, polarization));
                    }
                }
            }
        }
        rows.sort_by(|x, y| x.detuning_mhz.total_cmp(&y.detuning_mhz));
        TransitionTable {
            field_t: self.field_t,
            rows,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub ground: usize,
    pub excited: usize,
    pub polarization: Polarization,
    pub detuning_mhz: f64,
    pub coupling: f64,
    pub ground_label: BasisState,
    pub excited_label: BasisState,
}

impl Transition {
    pub fn label(&self) -> String {
        format!("{}->{}", self.ground_label, self.excited_label)
    }

    /// Key that identifies a line independently of the field value.
    pub fn key(&self) -> (usize, usize, Polarization) {
        (self.ground, self.excited, self.polarization)
    }
}

/// Allowed sigma transitions at one field, sorted by detuning.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    pub field_t: f64,
    pub rows: Vec<Transition>,
}

impl TransitionTable {
    pub fn of(&self, polarization: Polarization) -> impl Iterator<Item = &Transition> {
        self.rows.iter().filter(move |r| r.polarization == polarization)
    }

    /// Rows whose |C| exceeds `threshold`.
    pub fn strong(&self, threshold: f64) -> impl Iterator<Item = &Transition> {
        self.rows.iter().filter(move |r| r.coupling.abs() > threshold)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "polarization", "detuning_MHz", "coupling", "ground_label", "excited_label"])?;
        for (i, row) in self.rows.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                row.polarization.to_string(),
                format!("{:.4}", row.detuning_mhz),
                format!("{:.8}", row.coupling),
                row.ground_label.to_string(),
                row.excited_label.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sigma transition table at field B with the default coupling floor.
pub fn transition_table(field_t: f64, constants: &AtomicConstants) -> Result<TransitionTable> {
    Ok(FieldModel::new(field_t, constants)?.table(DEFAULT_COUPLING_FLOOR))
}
