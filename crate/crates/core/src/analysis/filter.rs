use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hat matrix of a least-squares polynomial fit over `window` points:
/// row r gives the smoothed value at position r from the raw window.
fn projection(window: usize, order: usize) -> Result<DMatrix<f64>> {
    let c = (window - 1) as f64 / 2.0;
    let v = DMatrix::from_fn(window, order + 1, |i, k| ((i as f64 - c) / c.max(1.0)).powi(k as i32));
    let gram = v.transpose() * &v;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument(format!("singular Savitzky-Golay system (window {window}, order {order})")))?;
    Ok(&v * inv * v.transpose())
}

/// Savitzky-Golay smoothing. Interior points use the centered window;
/// the first and last window/2 points are evaluated from the polynomial fit
/// to the first and last full window.
pub fn savitzky_golay(signal: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) || window <= order || order < 1 || window > signal.len() {
        return Err(Error::InvalidArgument(format!(
            "savitzky_golay needs odd window > order >= 1 and window <= length (window {window}, order {order}, length {})",
            signal.len()
        )));
    }
    let p = projection(window, order)?;
    let n = signal.len();
    let half = window / 2;
    let mut out = vec![0.0; n];
    let dot = |row: usize, start: usize| -> f64 { (0..window).map(|j| p[(row, j)] * signal[start + j]).sum() };
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i < half {
            dot(i, 0)
        } else if i + half >= n {
            dot(window - (n - i), n - window)
        } else {
            dot(half, i - half)
        };
    }
    Ok(out)
}
