use crate::analysis::{PeakList, PeakStatus, TransitionLabel};
use crate::atomic::{AtomicConstants, FieldModel};
use crate::error::{Error, Result};

pub const DEFAULT_GATE_MHZ: f64 = 300.0;

/// Field grid step used by [`assign_peaks_scan`], tesla.
pub const SCAN_STEP_T: f64 = 1e-3;

fn principal(field_t: f64, constants: &AtomicConstants) -> Result<Vec<(TransitionLabel, f64)>> {
    let model = FieldModel::new(field_t, constants)?;
    Ok(model
        .principal_sigma_lines()
        .into_iter()
        .map(|t| ((t.ground_label, t.excited_label), t.detuning_mhz))
        .collect())
}

/// Indices of candidate entries: measured, fitted and without a label.
fn candidates(peaks: &PeakList) -> Vec<usize> {
    peaks
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.label.is_none() && e.center_mhz.is_finite() && e.status != PeakStatus::Blended)
        .map(|(i, _)| i)
        .collect()
}

/// Greedy one-to-one matching, closest pair first. Returns (entry, line) pairs
/// and the summed squared mismatch.
fn greedy(peaks: &PeakList, lines: &[(TransitionLabel, f64)], gate_mhz: f64) -> (Vec<(usize, usize)>, f64) {
    let taken_labels: Vec<TransitionLabel> = peaks.entries.iter().filter(|e| e.usable()).filter_map(|e| e.label).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in candidates(peaks) {
        for (j, (label, nu)) in lines.iter().enumerate() {
            let d = (peaks.entries[i].center_mhz - nu).abs();
            if d < gate_mhz && !taken_labels.contains(label) {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_peak, mut used_line) = (Vec::new(), Vec::new());
    let mut out = Vec::new();
    let mut cost = 0.0;
    for (d, i, j) in pairs {
        if !used_peak.contains(&i) && !used_line.contains(&j) {
            used_peak.push(i);
            used_line.push(j);
            out.push((i, j));
            cost += d * d;
        }
    }
    (out, cost)
}

/// Labels unlabeled centers by nearest principal line at `b_guess`. Centers
/// with no line inside the gate stay unassigned. Fails when fewer than two
/// usable peaks result.
pub fn assign_peaks(peaks: &PeakList, b_guess_t: f64, gate_mhz: f64, constants: &AtomicConstants) -> Result<PeakList> {
    if !(gate_mhz > 0.0) {
        return Err(Error::InvalidArgument(format!("gate must be positive, got {gate_mhz} MHz")));
    }
    let lines = principal(b_guess_t, constants)?;
    let (matches, _) = greedy(peaks, &lines, gate_mhz);
    let mut out = peaks.clone();
    for i in candidates(peaks) {
        out.entries[i].status = PeakStatus::Unassigned;
    }
    for (i, j) in matches {
        out.entries[i].label = Some(lines[j].0);
        out.entries[i].status = PeakStatus::Ok;
    }
    let usable = out.usable().count();
    if usable < 2 {
        return Err(Error::UnderConstrained(usable));
    }
    Ok(out)
}

/// Picks the assignment field by scanning `bounds` on a 1 mT grid for the
/// most gated matches (ties broken by the smallest squared mismatch), then
/// assigns there.
pub fn assign_peaks_scan(peaks: &PeakList, bounds: (f64, f64), gate_mhz: f64, constants: &AtomicConstants) -> Result<(PeakList, f64)> {
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("invalid bounds [{lo}, {hi}] T")));
    }
    let n = ((hi - lo) / SCAN_STEP_T).ceil() as usize;
    let mut best: Option<(usize, f64, f64)> = None;
    for k in 0..=n {
        let b = (lo + k as f64 * SCAN_STEP_T).min(hi);
        let (m, cost) = greedy(peaks, &principal(b, constants)?, gate_mhz);
        let better = match best {
            None => true,
            Some((count, c, _)) => m.len() > count || (m.len() == count && cost < c),
        };
        if better {
            best = Some((m.len(), cost, b));
        }
    }
    let b = best.map(|(_, _, b)| b).unwrap_or(lo);
    Ok((assign_peaks(peaks, b, gate_mhz, constants)?, b))
}
