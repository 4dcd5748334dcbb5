use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;

/// Brent's bounded minimizer: golden-section steps with parabolic
/// interpolation whenever it is acceptable. Returns (x, f(x)).
pub fn brent_minimize<F>(mut f: F, (lo, hi): (f64, f64), tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (lo, hi);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..MAX_ITERATIONS {
        let m = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok((x, fx));
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= m { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_quartic() {
        let (x, _) = brent_minimize(|x| Ok((x - 0.3263).powi(2)), (0.2, 0.5), 1e-9).unwrap();
        assert!((x - 0.3263).abs() < 1e-8);
        let (x, _) = brent_minimize(|x| Ok((x - 1.7).powi(4) + 0.5), (-3.0, 4.0), 1e-7).unwrap();
        assert!((x - 1.7).abs() < 1e-2);
    }

    #[test]
    fn monotone_runs_to_the_edge() {
        let (x, _) = brent_minimize(Ok, (0.0, 1.0), 1e-6).unwrap();
        assert!(x < 1e-5);
    }
}
