//! Wigner 3-j symbols and the electric-dipole angular factor.

use crate::error::Result;
use crate::halfint::HalfInt;

const FACTORIALS: [f64; 41] = {
    let mut table = [1.0; 41];
    let mut n = 1;
    while n < 41 {
        table[n] = table[n - 1] * n as f64;
        n += 1;
    }
    table
};

fn factorial(twice_n: i32) -> f64 {
    debug_assert!(twice_n >= 0 && twice_n % 2 == 0);
    FACTORIALS[(twice_n / 2) as usize]
}

fn triangle(j1: i32, j2: i32, j3: i32) -> bool {
    j3 >= (j1 - j2).abs() && j3 <= j1 + j2 && (j1 + j2 + j3) % 2 == 0
}

/// Wigner 3-j symbol on half-integer arguments; zero whenever a selection
/// rule fails.
pub fn wigner_3j_half(j1: HalfInt, j2: HalfInt, j3: HalfInt, m1: HalfInt, m2: HalfInt, m3: HalfInt) -> f64 {
    let (j1, j2, j3) = (j1.twice(), j2.twice(), j3.twice());
    let (m1, m2, m3) = (m1.twice(), m2.twice(), m3.twice());
    if j1 < 0 || j2 < 0 || j3 < 0 || m1 + m2 + m3 != 0 || !triangle(j1, j2, j3) {
        return 0.0;
    }
    for (j, m) in [(j1, m1), (j2, m2), (j3, m3)] {
        if m.abs() > j || (j + m) % 2 != 0 {
            return 0.0;
        }
    }
    if j1.max(j2).max(j3) > 40 {
        // outside the factorial table; arguments this large are never needed here
        return f64::NAN;
    }

    // Racah closed form; all quantities below are twice-values.
    let delta = factorial(j1 + j2 - j3) * factorial(j1 - j2 + j3) * factorial(-j1 + j2 + j3) / factorial(j1 + j2 + j3 + 2);
    let prefactor = (delta
        * factorial(j1 + m1)
        * factorial(j1 - m1)
        * factorial(j2 + m2)
        * factorial(j2 - m2)
        * factorial(j3 + m3)
        * factorial(j3 - m3))
    .sqrt();

    let k_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let k_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    let mut k = k_min;
    while k <= k_max {
        let denom = factorial(k)
            * factorial(j3 - j2 + k + m1)
            * factorial(j3 - j1 + k - m2)
            * factorial(j1 + j2 - j3 - k)
            * factorial(j1 - k - m1)
            * factorial(j2 - k + m2);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
        k += 2;
    }
    let phase = (j1 - j2 - m3) / 2;
    let sign = if phase.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * prefactor * sum
}

/// Wigner 3-j symbol taking plain numbers; errors if any argument is not a
/// multiple of 1/2.
pub fn wigner_3j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> Result<f64> {
    Ok(wigner_3j_half(
        HalfInt::from_f64(j1)?,
        HalfInt::from_f64(j2)?,
        HalfInt::from_f64(j3)?,
        HalfInt::from_f64(m1)?,
        HalfInt::from_f64(m2)?,
        HalfInt::from_f64(m3)?,
    ))
}

/// Angular factor of the spherical dipole component `q` between
/// |j_g m_g> and |j_e m_e>, with m_e = m_g + q.
///
/// Wigner-Eckart form (-1)^(j_e - m_e) sqrt(2 j_e + 1) (j_e 1 j_g; -m_e q m_g),
/// normalized so that summing the square over m_g and q gives 1 for every m_e.
pub fn dipole_angular_factor(j_g: HalfInt, m_g: HalfInt, j_e: HalfInt, m_e: HalfInt, q: i32) -> f64 {
    let q = HalfInt::from_twice(2 * q);
    let three_j = wigner_3j_half(j_e, HalfInt::from_twice(2), j_g, -m_e, q, m_g);
    if three_j == 0.0 {
        return 0.0;
    }
    let phase = (j_e - m_e).twice() / 2;
    let sign = if phase.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * f64::from(j_e.twice() + 1).sqrt() * three_j
}
