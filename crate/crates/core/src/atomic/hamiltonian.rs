use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::halfint::HalfInt;

use super::{AtomicConstants, Manifold};

/// Uncoupled basis state |m_I, m_J>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub m_i: HalfInt,
    pub m_j: HalfInt,
}

impl BasisState {
    pub fn m_f(&self) -> HalfInt {
        self.m_i + self.m_j
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}>", self.m_i, self.m_j)
    }
}

/// Basis ordering: m_I descending, then m_J descending.
pub fn basis_states(i: HalfInt, j: HalfInt) -> Vec<BasisState> {
    i.projections()
        .flat_map(|m_i| j.projections().map(move |m_j| BasisState { m_i, m_j }))
        .collect()
}

struct SpinOps {
    z: DMatrix<f64>,
    raise: DMatrix<f64>,
}

fn spin_ops(j: HalfInt) -> SpinOps {
    let ms: Vec<HalfInt> = j.projections().collect();
    let d = ms.len();
    let jv = j.value();
    let mut z = DMatrix::zeros(d, d);
    let mut raise = DMatrix::zeros(d, d);
    for (k, m) in ms.iter().enumerate() {
        let m = m.value();
        z[(k, k)] = m;
        // <m+1| J+ |m>; row k-1 holds m+1
        if k > 0 {
            raise[(k - 1, k)] = (jv * (jv + 1.0) - m * (m + 1.0)).sqrt();
        }
    }
    SpinOps { z, raise }
}

/// H_hfs + H_B of one manifold in MHz, relative to its center of gravity.
pub fn build_hamiltonian(manifold: Manifold, field_t: f64, constants: &AtomicConstants) -> Result<DMatrix<f64>> {
    if !(field_t.is_finite() && field_t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "field must be finite and non-negative, got {field_t} T"
        )));
    }
    let i = constants.nuclear_spin();
    let j = constants.electronic_j(manifold);
    let nuc = spin_ops(i);
    let el = spin_ops(j);
    let id_i = DMatrix::<f64>::identity(i.multiplicity(), i.multiplicity());
    let id_j = DMatrix::<f64>::identity(j.multiplicity(), j.multiplicity());

    let iz = nuc.z.kronecker(&id_j);
    let ip = nuc.raise.kronecker(&id_j);
    let jz = id_i.kronecker(&el.z);
    let jp = id_i.kronecker(&el.raise);
    let i_dot_j = &iz * &jz + 0.5 * (&ip * jp.transpose() + ip.transpose() * &jp);

    let a = constants.hyperfine_a_mhz(manifold);
    let mut h = a * &i_dot_j;

    let b = constants.hyperfine_b_mhz(manifold);
    let (iv, jv) = (i.value(), j.value());
    if b != 0.0 && iv > 0.5 && jv > 0.5 {
        let dim = h.nrows();
        let identity = DMatrix::<f64>::identity(dim, dim);
        let quad = 3.0 * &i_dot_j * &i_dot_j + 1.5 * &i_dot_j - iv * (iv + 1.0) * jv * (jv + 1.0) * identity;
        h += (b / (2.0 * iv * (2.0 * iv - 1.0) * jv * (2.0 * jv - 1.0))) * quad;
    }

    let zeeman = constants.mu_b_over_h_mhz_per_tesla * field_t * (constants.g_j(manifold) * jz + constants.g_i * iz);
    h += zeeman;
    Ok(h)
}
