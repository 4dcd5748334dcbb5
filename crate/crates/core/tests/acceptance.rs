//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all eight; pass criterion numbers
//! (`-- 3 6`) to run a subset.

use std::path::Path;
use std::time::{Duration, Instant};

use hpbsas::analysis::{
    calibrate, extract_peaks, find_peaks, fit_peak, AnchorSpec, CalibrationSettings, PeakList, PeakStatus, ProfileKind, ScanSpec,
};
use hpbsas::atomic::{wigner_3j_half, AtomicConstants, FieldModel, Polarization, Transition};
use hpbsas::estimator::{analytic_sigma_b, monte_carlo_uncertainty, EstimatorOptions};
use hpbsas::io::{
    cmd_estimate, cmd_generate_dataset, cmd_simulate, cmd_transitions, Context, DatasetManifest, DatasetSection, EstimateSection,
    NoiseSpec, RunConfig, SimulateSection,
};
use hpbsas::obe::{rabi_frequency, simulate_spectrum, DetuningGrid, Drive, LineSelector, OBEParams, OBEState, Simulator, Spectrum};
use hpbsas::{HalfInt, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::clebsch_gordan_table;

const REF_FIELD_T: f64 = 0.4092;
const REF_SIGMA_MINUS: [f64; 8] = [-12186.73, -10995.19, -9616.43, -7898.86, -7905.06, -5553.14, -4001.62, -2786.95];
const REF_SIGMA_PLUS: [f64; 8] = [3357.96, 4369.00, 5577.04, 6927.47, 7134.37, 9654.02, 11373.56, 12742.01];
/// Rows 4 and 5 of each reference list are left out of the field fit.
const FIT_EXCLUDED_ROWS: [usize; 2] = [3, 4];

const C1_TOLERANCE_MHZ: f64 = 2.0;
const C1_MAX_RUNTIME: Duration = Duration::from_secs(1);
const C1_STRONG_COUPLING: f64 = 0.5;

const C2_BOUNDS_T: [f64; 2] = [0.2, 0.5];
const C2_TOLERANCE_T: f64 = 5e-4;
const C2_N_MC: usize = 1000;
const C2_MAX_RUNTIME: Duration = Duration::from_secs(10);

const C3_INTENSITIES_W_PER_M2: [f64; 2] = [4960.0, 27100.0];
const C3_TARGET_RATIO: f64 = 0.423;
const C3_RATIO_TOLERANCE: f64 = 0.02;
const C3_TARGET_ANALYTIC: f64 = 0.428;
const C3_ANALYTIC_TOLERANCE: f64 = 0.005;

const C4_TEMPERATURES_K: [f64; 2] = [300.0, 600.0];
const C4_TARGET_RATIO: f64 = 0.726;
const C4_RATIO_TOLERANCE: f64 = 0.03;
const C4_BANDS_MHZ: [(f64, f64); 2] = [(559.0, 19.0), (771.0, 40.0)];
const C4_EXPECTED_LINES: usize = 1;

const C5_FIELDS_T: [f64; 3] = [0.2602, 0.3263, 0.4092];
const C5_LINE_GROUPS: usize = 16;
const C5_SEARCH_HALF_WIDTH_MHZ: f64 = 150.0;

const C6_TRACE_TOLERANCE: f64 = 1e-9;
const C6_TRAJECTORIES: usize = 40;
const C6_CENTER_TOLERANCE_GAMMA: f64 = 0.1;
const C6_FWHM_TOLERANCE: f64 = 0.02;
const C6_3J_TOLERANCE: f64 = 1e-12;
const C6_ROUND_TRIP_FIELDS: usize = 10;
const C6_ROUND_TRIP_RANGE_T: [f64; 2] = [0.2, 0.4];
const C6_ROUND_TRIP_TOLERANCE_T: f64 = 1e-4;

const C7_FIELD_T: f64 = 0.3263;
const C7_SIGMAS_MHZ: [f64; 3] = [0.5, 1.0, 2.0];
const C7_N_MC: usize = 2000;
const C7_LINEARITY_TOLERANCE: f64 = 0.15;
const C7_DOUBLING_TOLERANCE: f64 = 0.10;

const C8_MARKER_RMS_MHZ: f64 = 1.0;
const C8_BETWEEN_RMS_MHZ: f64 = 5.0;
const C8_SUBPIXEL_RMS_SAMPLES: f64 = 0.05;
const C8_SNR: f64 = 20.0;
const C8_NOISY_SCANS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn quiet(_: &str) {}

fn context(dir: &Path) -> Context<'static> {
    Context {
        output_dir: Some(dir.to_path_buf()),
        seed: None,
        progress: &quiet,
    }
}

fn principal(model: &FieldModel, ground: &str, excited: &str) -> Transition {
    model
        .principal_sigma_lines()
        .into_iter()
        .find(|t| t.ground_label.to_string() == ground && t.excited_label.to_string() == excited)
        .unwrap_or_else(|| panic!("no principal line {ground}->{excited}"))
}

fn fit_fwhm(spectrum: &Spectrum, kind: ProfileKind) -> Result<f64> {
    let x = &spectrum.detuning_mhz;
    let fit = fit_peak(x, &spectrum.signal, (x[0], x[x.len() - 1]), kind)?;
    Ok(fit.fwhm_mhz())
}

fn criterion_1() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let start = Instant::now();
    let mut csv_out = Vec::new();
    cmd_transitions(REF_FIELD_T, &c, &mut csv_out)?;
    let elapsed = start.elapsed();
    let mut reader = csv::Reader::from_reader(csv_out.as_slice());
    let mut minus = Vec::new();
    let mut plus = Vec::new();
    for row in reader.records() {
        let row = row?;
        let detuning: f64 = row[2].parse().unwrap();
        let coupling: f64 = row[3].parse().unwrap();
        if coupling.abs() < C1_STRONG_COUPLING {
            continue;
        }
        match &row[1] {
            "sigma-" => minus.push(detuning),
            "sigma+" => plus.push(detuning),
            _ => {}
        }
    }
    let mut worst: (f64, f64) = (0.0, f64::NAN);
    let mut misses = Vec::new();
    for (reference, lines) in [(REF_SIGMA_MINUS, &minus), (REF_SIGMA_PLUS, &plus)] {
        for r in reference {
            let err = lines.iter().map(|d| (d - r).abs()).fold(f64::INFINITY, f64::min);
            if err > worst.0 {
                worst = (err, r);
            }
            if err > C1_TOLERANCE_MHZ {
                misses.push(format!("{r} MHz off by {err:.2}"));
            }
        }
    }
    let pass = misses.is_empty() && elapsed < C1_MAX_RUNTIME;
    outcome(
        pass,
        format!(
            "{}/16 within {C1_TOLERANCE_MHZ} MHz; worst {:.2} MHz at {}; misses [{}]; {:.0} ms",
            16 - misses.len(),
            worst.0,
            worst.1,
            misses.join(", "),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn criterion_2() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut text = String::from("transition_label,center_MHz,sigma_fit_MHz\n");
    let mut n = 0;
    for reference in [REF_SIGMA_MINUS, REF_SIGMA_PLUS] {
        for (i, d) in reference.iter().enumerate() {
            if !FIT_EXCLUDED_ROWS.contains(&i) {
                text.push_str(&format!(",{d},1.0\n"));
                n += 1;
            }
        }
    }
    let peaks = dir.path().join("peaks.csv");
    std::fs::write(&peaks, text)?;
    let mut config = RunConfig::new();
    config.seed = Some(1);
    let mut section = EstimateSection::new(C2_BOUNDS_T);
    section.sigma_calib_mhz = Some(1.0);
    section.n_mc = C2_N_MC;
    config.estimate = Some(section);
    let start = Instant::now();
    let out = cmd_estimate(&peaks, &config, &context(dir.path()))?;
    let elapsed = start.elapsed();
    let e = &out.estimate;
    let pass = (e.b_hat_t - REF_FIELD_T).abs() <= C2_TOLERANCE_T && e.sigma_b_t > 0.0 && elapsed < C2_MAX_RUNTIME;
    outcome(
        pass,
        format!(
            "{n} centers -> {} (sigma_B = {:.2e} T), {:.2} s",
            out.summary,
            e.sigma_b_t,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let model = FieldModel::new(REF_FIELD_T, &c)?;
    let line = principal(&model, "|+1/2,-1/2>", "|+1/2,-3/2>");
    let gamma = c.natural_linewidth_mhz();
    let mut widths = Vec::new();
    for intensity in C3_INTENSITIES_W_PER_M2 {
        let s = intensity / c.saturation_intensity_w_per_m2;
        let guess = gamma * (1.0 + 2.0 * s * line.coupling.powi(2)).sqrt();
        let mut p = OBEParams::new(DetuningGrid {
            min_mhz: line.detuning_mhz - 5.0 * guess,
            max_mhz: line.detuning_mhz + 5.0 * guess,
            step_mhz: guess / 40.0,
        })
        .with_intensity(intensity);
        p.drive = Drive::Both;
        p.uniform_field = true;
        p.velocity.count = 41;
        p.lines = vec![LineSelector::new(line.ground_label, line.excited_label)];
        widths.push(fit_fwhm(&simulate_spectrum(REF_FIELD_T, &p, &c)?, ProfileKind::Lorentzian)?);
    }
    let ratio = widths[0] / widths[1];
    let [i1, i2] = C3_INTENSITIES_W_PER_M2.map(|i| i / c.saturation_intensity_w_per_m2);
    let analytic = ((1.0 + i1) / (1.0 + i2)).sqrt();
    let pass = (ratio - C3_TARGET_RATIO).abs() <= C3_RATIO_TOLERANCE && (analytic - C3_TARGET_ANALYTIC).abs() <= C3_ANALYTIC_TOLERANCE;
    outcome(
        pass,
        format!(
            "Lorentzian FWHM {:.1} / {:.1} MHz, ratio {ratio:.4} (target {C3_TARGET_RATIO} +- {C3_RATIO_TOLERANCE}); \
             analytic {analytic:.4} (target {C3_TARGET_ANALYTIC} +- {C3_ANALYTIC_TOLERANCE}); I/I_sat = {i1:.0}, {i2:.0}",
            widths[0], widths[1]
        ),
    )
}

fn criterion_4() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let model = FieldModel::new(REF_FIELD_T, &c)?;
    let line = principal(&model, "|+3/2,-1/2>", "|+3/2,-3/2>");
    let mut widths = Vec::new();
    for t in C4_TEMPERATURES_K {
        let mut p = OBEParams::new(DetuningGrid {
            min_mhz: line.detuning_mhz - 1150.0,
            max_mhz: line.detuning_mhz + 1150.0,
            step_mhz: 20.0,
        });
        p.temperature_k = t;
        p.drive = Drive::Both;
        p.velocity.count = 41;
        p.lines = vec![LineSelector::new(line.ground_label, line.excited_label)];
        assert_eq!(p.lines.len(), C4_EXPECTED_LINES);
        widths.push(fit_fwhm(&simulate_spectrum(REF_FIELD_T, &p, &c)?, ProfileKind::Gaussian)?);
    }
    let ratio = widths[0] / widths[1];
    let ratio_ok = (ratio - C4_TARGET_RATIO).abs() <= C4_RATIO_TOLERANCE;
    let bands: Vec<bool> = widths.iter().zip(C4_BANDS_MHZ).map(|(w, (m, tol))| (w - m).abs() <= tol).collect();
    let pass = ratio_ok && bands.iter().all(|b| *b);
    outcome(
        pass,
        format!(
            "Gaussian FWHM {:.0} MHz at 300 K [{}], {:.0} MHz at 600 K [{}], ratio {ratio:.3} [{}] (sqrt(1/2) = {:.3})",
            widths[0],
            if bands[0] { "in 559+-19" } else { "outside 559+-19" },
            widths[1],
            if bands[1] { "in 771+-40" } else { "outside 771+-40" },
            if ratio_ok { "in 0.726+-0.03" } else { "outside 0.726+-0.03" },
            0.5f64.sqrt()
        ),
    )
}

fn survey_params() -> OBEParams {
    let mut p = OBEParams::new(DetuningGrid {
        min_mhz: -13_600.0,
        max_mhz: 14_000.0,
        step_mhz: 40.0,
    });
    p.velocity.count = 41;
    p.velocity.span_vp = 3.0;
    p.integration.t_max_tau = 20.0;
    p.integration.phases = 2;
    p
}

fn criterion_5() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let dir = tempfile::tempdir()?;
    let mut config = RunConfig::new();
    config.obe = Some(survey_params());
    config.simulate = Some(SimulateSection {
        fields_t: C5_FIELDS_T.to_vec(),
    });
    let files = cmd_simulate(&config, &context(dir.path()))?;
    let mut counts = Vec::new();
    let mut blended = Vec::new();
    let mut centers: Vec<Vec<(String, f64, f64)>> = Vec::new();
    for (path, &b) in files.iter().zip(&C5_FIELDS_T) {
        let spectrum = Spectrum::load(path)?;
        let lines = FieldModel::new(b, &c)?.principal_sigma_lines();
        let peaks = extract_peaks(&spectrum, &lines, C5_SEARCH_HALF_WIDTH_MHZ, ProfileKind::Gaussian);
        let mut found = Vec::new();
        for (line, entry) in lines.iter().zip(&peaks.entries) {
            if entry.usable() && (entry.center_mhz - line.detuning_mhz).abs() < C5_SEARCH_HALF_WIDTH_MHZ {
                found.push((line.label(), entry.center_mhz, line.detuning_mhz));
            }
        }
        counts.push(found.len());
        blended.push(peaks.entries.iter().filter(|e| e.status == PeakStatus::Blended).count());
        centers.push(found);
    }
    let mut ordered = 0;
    let mut complete = 0;
    let mut disordered = Vec::new();
    for (label, _, _) in &centers[2] {
        let series: Vec<(f64, f64)> = centers
            .iter()
            .filter_map(|f| f.iter().find(|(l, _, _)| l == label).map(|(_, x, d)| (*x, *d)))
            .collect();
        if series.len() != C5_FIELDS_T.len() {
            continue;
        }
        complete += 1;
        let sign = (series[2].1 - series[0].1).signum();
        if series.windows(2).all(|w| (w[1].0 - w[0].0) * sign > 0.0) {
            ordered += 1;
        } else {
            disordered.push(label.clone());
        }
    }
    let spread = |f: &Vec<(String, f64, f64)>| {
        let lo = f.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = f.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let spreads: Vec<f64> = centers.iter().map(spread).collect();
    let diverging = spreads.windows(2).all(|w| w[1] > w[0]);
    let pass = counts.iter().all(|&n| n == C5_LINE_GROUPS) && ordered == C5_LINE_GROUPS && diverging;
    outcome(
        pass,
        format!(
            "line groups {:?} (need {C5_LINE_GROUPS} each), blended {:?}; {ordered} monotone in B of {complete} found at every field (need {C5_LINE_GROUPS}){}; manifold span {:.0} / {:.0} / {:.0} MHz",
            counts,
            blended,
            if disordered.is_empty() { String::new() } else { format!(" (not: {})", disordered.join(", ")) },
            spreads[0],
            spreads[1],
            spreads[2]
        ),
    )
}

fn random_state(model: &FieldModel, rng: &mut ChaCha8Rng) -> OBEState {
    let mut s = OBEState::thermal(model);
    let n = s.ground.len() + s.excited.len();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let (g, e) = raw.split_at(s.ground.len());
    s.ground = g.iter().map(|x| x / total).collect();
    s.excited = e.iter().map(|x| x / total).collect();
    for (k, line) in hpbsas::obe::coherence_lines(model).iter().enumerate() {
        let r = (s.ground[line.ground] * s.excited[line.excited]).sqrt() * rng.random_range(0.0..1.0);
        s.coherences[k] = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
    }
    s
}

fn conservation(c: &AtomicConstants) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_rate: f64 = 0.0;
    let mut integrations = 0;
    for _ in 0..C6_TRAJECTORIES {
        let b = rng.random_range(0.2..0.45);
        let model = FieldModel::new(b, c)?;
        let line = &model.principal_sigma_lines()[rng.random_range(0..16)];
        let d = line.detuning_mhz + rng.random_range(-400.0..400.0);
        let v = rng.random_range(-700.0..700.0);
        let mut p = OBEParams::new(DetuningGrid {
            min_mhz: d,
            max_mhz: d,
            step_mhz: 1.0,
        });
        p.integration.t_max_tau = 20.0;
        p.integration.phases = 1;
        let sim = Simulator::new(&model, &p, c)?;
        // every RK4 step is checked against the trace, population and coherence bounds
        sim.fluorescence(v, d)?;
        integrations += 1;
        let ds = sim.derivative(&random_state(&model, &mut rng), 1e-8, v, d)?;
        worst_rate = worst_rate.max(ds.trace().abs() / c.gamma());
    }
    let pass = worst_rate < C6_TRACE_TOLERANCE;
    Ok((
        pass,
        format!("{integrations} checked trajectories, max |d tr/dt|/Gamma {worst_rate:.1e}"),
    ))
}

fn two_level(c: &AtomicConstants) -> Result<(bool, String)> {
    let model = FieldModel::new(REF_FIELD_T, c)?;
    let line = model.principal_lines(Polarization::SigmaPlus)[0].clone();
    let gamma = c.natural_linewidth_mhz();
    let mut worst_center: f64 = 0.0;
    let mut worst_width: f64 = 0.0;
    for s in [0.5, 2.0, 10.0] {
        let intensity = s * c.saturation_intensity_w_per_m2;
        let half = 6.0 * gamma * (1.0 + 4.0 * s).sqrt();
        let mut p = OBEParams::new(DetuningGrid {
            min_mhz: line.detuning_mhz - half,
            max_mhz: line.detuning_mhz + half,
            step_mhz: 0.25,
        })
        .with_intensity(intensity);
        p.drive = Drive::SigmaPlus;
        p.uniform_field = true;
        p.lines = vec![LineSelector::new(line.ground_label, line.excited_label)];
        let om = rabi_frequency(line.coupling, p.electric_field()?, c) * c.lifetime_s;
        let spectrum = simulate_spectrum(REF_FIELD_T, &p, c)?;
        let x = &spectrum.detuning_mhz;
        let fit = fit_peak(x, &spectrum.signal, (x[0], x[x.len() - 1]), ProfileKind::Lorentzian)?;
        let expected = gamma * (1.0 + 8.0 * om * om).sqrt();
        worst_center = worst_center.max((fit.center_mhz - line.detuning_mhz).abs() / gamma);
        worst_width = worst_width.max((fit.fwhm_mhz() / expected - 1.0).abs());
    }
    let pass = worst_center < C6_CENTER_TOLERANCE_GAMMA && worst_width < C6_FWHM_TOLERANCE;
    Ok((
        pass,
        format!("two-level center {worst_center:.1e} Gamma, FWHM {:.2}%", worst_width * 100.0),
    ))
}

fn three_j() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for tj1 in 0..=5 {
        for tj2 in 0..=5 {
            let cg = clebsch_gordan_table(tj1, tj2);
            for tj3 in 0..=5 {
                for tm1 in (-tj1..=tj1).step_by(2) {
                    for tm2 in (-tj2..=tj2).step_by(2) {
                        for tm3 in (-tj3..=tj3).step_by(2) {
                            let h = HalfInt::from_twice;
                            let got = wigner_3j_half(h(tj1), h(tj2), h(tj3), h(tm1), h(tm2), h(tm3));
                            let expected = if tm1 + tm2 + tm3 != 0 {
                                0.0
                            } else {
                                let coupled = cg.get(&(tm1, tm2, tj3, -tm3)).copied().unwrap_or(0.0);
                                let sign = if ((tj1 - tj2 - tm3) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                                sign * coupled / f64::from(tj3 + 1).sqrt()
                            };
                            worst = worst.max((got - expected).abs());
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    (worst < C6_3J_TOLERANCE, format!("3-j max error {worst:.1e} over {n} symbols"))
}

/// Homogeneous, weakly driven spectra: every principal line is a narrow
/// symmetric peak at its own detuning.
fn round_trip_params() -> OBEParams {
    let mut p = OBEParams::new(DetuningGrid {
        min_mhz: -13_000.0,
        max_mhz: 13_500.0,
        step_mhz: 1.0,
    })
    .with_intensity(0.05 * AtomicConstants::rb87().saturation_intensity_w_per_m2);
    p.uniform_field = true;
    p.integration.t_max_tau = 20.0;
    p.integration.phases = 1;
    p.integration.coherence_cutoff_mhz = 60.0;
    p
}

fn round_trip() -> Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let mut config = RunConfig::new();
    config.seed = Some(60);
    config.obe = Some(round_trip_params());
    config.dataset = Some(DatasetSection {
        field_range_t: C6_ROUND_TRIP_RANGE_T,
        count: C6_ROUND_TRIP_FIELDS,
        noise: NoiseSpec::default(),
    });
    let (_, manifest): (_, DatasetManifest) = cmd_generate_dataset(&config, &context(dir.path()))?;
    let mut estimate = RunConfig::new();
    estimate.seed = Some(61);
    let mut section = EstimateSection::new([0.15, 0.45]);
    section.sigma_calib_mhz = Some(0.0);
    section.n_mc = 100;
    estimate.estimate = Some(section);
    let mut worst: f64 = 0.0;
    for entry in &manifest.entries {
        let spectrum = Spectrum::load(&dir.path().join(&entry.file))?;
        let peaks: PeakList = find_peaks(&spectrum, 0.01, 8.0, ProfileKind::Lorentzian);
        let stem = entry.file.file_stem().unwrap_or_default().to_string_lossy();
        let peaks_file = dir.path().join(format!("{stem}_peaks.csv"));
        peaks.save(&peaks_file)?;
        let out = cmd_estimate(&peaks_file, &estimate, &context(&dir.path().join("estimates")))?;
        worst = worst.max((out.estimate.b_hat_t - entry.field_t).abs());
    }
    let pass = worst < C6_ROUND_TRIP_TOLERANCE_T;
    Ok((
        pass,
        format!("round trip max |dB| {worst:.1e} T over {} fields", manifest.entries.len()),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let parts = [conservation(&c)?, two_level(&c)?, three_j(), round_trip()?];
    let pass = parts.iter().all(|p| p.0);
    let detail = parts
        .iter()
        .map(|(ok, d)| format!("{d} [{}]", if *ok { "ok" } else { "fail" }))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn criterion_7() -> Result<Outcome> {
    let c = AtomicConstants::rb87();
    let model = FieldModel::new(C7_FIELD_T, &c)?;
    let options = EstimatorOptions::default();
    let mut mc = Vec::new();
    let mut worst_linearity: f64 = 0.0;
    for &s in &C7_SIGMAS_MHZ {
        let mut text = String::from("transition_label,center_MHz,sigma_fit_MHz\n");
        for line in model.principal_sigma_lines() {
            text.push_str(&format!("\"{}\",{},{s}\n", line.label(), line.detuning_mhz));
        }
        let peaks = PeakList::parse(&text, "criterion 7")?;
        let e = monte_carlo_uncertainty(&peaks, 0.0, C7_N_MC, (0.2, 0.5), 7, &options, &c)?;
        let analytic = analytic_sigma_b(&peaks, e.b_hat_t, 0.0, &options, &c)?;
        worst_linearity = worst_linearity.max((e.sigma_b_t / analytic - 1.0).abs());
        mc.push(e.sigma_b_t);
    }
    let doubling: Vec<f64> = mc.windows(2).map(|w| w[1] / w[0]).collect();
    let worst_doubling = doubling.iter().map(|r| (r / 2.0 - 1.0).abs()).fold(0.0, f64::max);
    let pass = worst_linearity <= C7_LINEARITY_TOLERANCE && worst_doubling <= C7_DOUBLING_TOLERANCE;
    outcome(
        pass,
        format!(
            "sigma_B {} mT; max |MC/analytic - 1| {:.1}%; doubling ratios {}",
            mc.iter().map(|s| format!("{:.4}", s * 1e3)).collect::<Vec<_>>().join(" / "),
            worst_linearity * 100.0,
            doubling.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

fn criterion_8() -> Result<Outcome> {
    let spec = ScanSpec::default();
    let scan = spec.generate(&[("pd1_V", &|_| 1.0)])?;
    let anchor = scan.markers_true[0];
    let settings = CalibrationSettings::new(AnchorSpec {
        detuning_mhz: spec.nu_at(anchor),
        sample: Some(anchor),
        reference_window_samples: None,
    });
    let cal = calibrate(&scan.trace, &settings)?;
    let markers = scan.markers_true.len();
    let at_markers = rms(scan.markers_true.iter().map(|&m| cal.axis.at(m) - spec.nu_at(m)));
    let first = scan.markers_true[0].ceil() as usize;
    let last = scan.markers_true[markers - 1].floor() as usize;
    let between = rms((first..=last).map(|i| cal.axis.nu_mhz[i] - scan.nu_true_mhz[i]));

    let mut errors = Vec::new();
    for seed in 0..C8_NOISY_SCANS {
        let noisy = ScanSpec {
            snr: C8_SNR,
            seed: 100 + seed,
            ..ScanSpec::default()
        };
        let scan = noisy.generate(&[("pd1_V", &|_| 1.0)])?;
        let cal = calibrate(&scan.trace, &settings)?;
        if cal.axis.markers.len() != scan.markers_true.len() {
            return outcome(false, format!("noisy scan {seed}: {} markers detected", cal.axis.markers.len()));
        }
        errors.extend(cal.axis.markers.iter().zip(&scan.markers_true).map(|(a, b)| a - b));
    }
    let subpixel = rms(errors.iter().copied());
    let parts = [
        at_markers < C8_MARKER_RMS_MHZ,
        between < C8_BETWEEN_RMS_MHZ,
        subpixel < C8_SUBPIXEL_RMS_SAMPLES,
    ];
    let tag = |ok: bool| if ok { "ok" } else { "fail" };
    outcome(
        parts.iter().all(|p| *p),
        format!(
            "{markers} markers; axis RMS {at_markers:.3} MHz at markers [{}], {between:.3} MHz between [{}]; \
             sub-pixel RMS {subpixel:.3} samples at SNR {C8_SNR} over {} markers [{}]",
            tag(parts[0]),
            tag(parts[1]),
            errors.len(),
            tag(parts[2])
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "transition table at 0.4092 T", criterion_1),
        (2, "field from reference centers", criterion_2),
        (3, "power-broadening ratio", criterion_3),
        (4, "Doppler scaling", criterion_4),
        (5, "three-field spectra", criterion_5),
        (6, "conservation and round trip", criterion_6),
        (7, "Monte Carlo linearity", criterion_7),
        (8, "calibration pipeline", criterion_8),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut passed = 0;
    let mut run = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = f().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        run += 1;
        passed += result.pass as usize;
        println!(
            "{} criterion {id} ({name}): {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{run} criteria pass");
}
