use crate::error::{Error, Result};

/// Local maxima with relative prominence of at least `min_prominence` (a
/// fraction of the trace's full range) and at least `min_spacing` samples
/// apart. When two candidates are too close the taller one wins. Output is
/// sorted ascending.
pub fn detect_etalon_peaks(trace: &[f64], min_prominence: f64, min_spacing: usize) -> Vec<usize> {
    let n = trace.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    // local maxima; a plateau counts once, at its middle
    let mut candidates = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if trace[i] > trace[i - 1] {
            let mut j = i;
            while j + 1 < n && trace[j + 1] == trace[i] {
                j += 1;
            }
            if j + 1 < n && trace[j + 1] < trace[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    let mut kept: Vec<usize> = candidates
        .into_iter()
        .filter(|&p| prominence(trace, p) >= min_prominence * range)
        .collect();
    kept.sort_by(|&a, &b| trace[b].total_cmp(&trace[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::new();
    for p in kept {
        if chosen.iter().all(|&q| p.abs_diff(q) >= min_spacing) {
            chosen.push(p);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Height above the higher of the two bases, where each base is the minimum
/// between the peak and the nearest strictly higher sample (or the edge).
fn prominence(trace: &[f64], p: usize) -> f64 {
    let h = trace[p];
    let mut left = h;
    for &y in trace[..p].iter().rev() {
        if y > h {
            break;
        }
        left = left.min(y);
    }
    let mut right = h;
    for &y in &trace[p + 1..] {
        if y > h {
            break;
        }
        right = right.min(y);
    }
    h - left.max(right)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subpixel {
    pub center: f64,
    /// Zero curvature: `center` is the input index.
    pub flat: bool,
}

/// Vertex of the parabola through (i-1, i, i+1).
pub fn parabolic_subpixel(trace: &[f64], index: usize) -> Result<Subpixel> {
    if index < 1 || index + 1 >= trace.len() {
        return Err(Error::InvalidArgument(format!(
            "subpixel index {index} needs a neighbour on each side (length {})",
            trace.len()
        )));
    }
    let (ym, y0, yp) = (trace[index - 1], trace[index], trace[index + 1]);
    let curvature = ym - 2.0 * y0 + yp;
    if curvature == 0.0 {
        return Ok(Subpixel {
            center: index as f64,
            flat: true,
        });
    }
    Ok(Subpixel {
        center: index as f64 + (ym - yp) / (2.0 * curvature),
        flat: false,
    })
}
