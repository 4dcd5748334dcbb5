use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpbsas::analysis::ScanSpec;
use hpbsas::atomic::{AtomicConstants, FieldModel};
use hpbsas::io::{DatasetManifest, MANIFEST_FILE};

const TINY_OBE: &str = r#"
[obe]
temperature_k = 313.0
intensity_w_per_m2 = 5000.0
drive = "both"
lines = [{ ground = "|+3/2,-1/2>", excited = "|+3/2,-3/2>" }]

[obe.velocity]
count = 5
span_vp = 2.0

[obe.detuning]
min_mhz = -3200.0
max_mhz = -2400.0
step_mhz = 100.0

[obe.integration]
dt_tau = 0.02
t_max_tau = 20.0
average_fraction = 0.5
phases = 1
coherence_cutoff_mhz = 1500.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hpbsas"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("SOURCE_DATE_EPOCH").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("no error record in {stderr}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn reference_peaks(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/peaks_0.4092T.csv");
    let dst = dir.join("peaks.csv");
    std::fs::copy(src, &dst).unwrap();
    dst
}

#[test]
fn transitions_prints_csv() {
    let out = run(&["transitions", "--B", "0.4092"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("index,polarization,detuning_MHz"));
    assert!(text.contains("-12186.7"));
    assert!(text.contains("12742.0"));
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"], "invalid_argument");
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    assert!(run(&["--help"]).status.success());
}

#[test]
fn estimate_reference_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = reference_peaks(dir.path());
    let cfg = write(
        dir.path(),
        "e.toml",
        "schema_version = 1\nseed = 3\n[estimate]\nbounds_t = [0.2, 0.5]\nsigma_calib_mhz = 1.0\nn_mc = 200\n",
    );
    let out_dir = dir.path().join("out");
    let out = run(&["estimate", s(&peaks), "--config", s(&cfg), "--output", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.trim().starts_with("B = 0.4092 ± "), "{summary}");
    let report: toml::Table = std::fs::read_to_string(out_dir.join("peaks_estimate.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((report["B_hat_T"].as_float().unwrap() - 0.4092).abs() < 5e-4);
    assert!(report["sigma_B_T"].as_float().unwrap() > 0.0);
    let trials = std::fs::read_to_string(out_dir.join("peaks_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 201);
}

#[test]
fn estimate_error_contract() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = reference_peaks(dir.path());
    let base = "schema_version = 1\n[estimate]\nsigma_calib_mhz = 1.0\nn_mc = 100\n";
    let narrow = write(dir.path(), "narrow.toml", &format!("{base}bounds_t = [0.2, 0.3]\n"));
    let model = FieldModel::new(0.4092, &AtomicConstants::rb87()).unwrap();
    let mut labeled = String::from("transition_label,center_MHz,sigma_fit_MHz\n");
    for line in model.principal_sigma_lines() {
        labeled.push_str(&format!("\"{}\",{},1.0\n", line.label(), line.detuning_mhz));
    }
    let labeled = write(dir.path(), "labeled.csv", &labeled);
    let wide = write(dir.path(), "wide.toml", &format!("{base}bounds_t = [0.2, 0.5]\n"));
    let o = dir.path().join("o");

    let out = run(&["estimate", s(&peaks), "--config", s(&wide), "--output", s(&o)]);
    assert_eq!(out.status.code(), Some(1), "seed is mandatory");

    let out = run(&["estimate", s(&labeled), "--config", s(&narrow), "--output", s(&o), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "bracket_failure");

    let bad = write(dir.path(), "bad.csv", "transition_label,center_MHz\n,100.0\n,abc\n");
    let out = run(&["estimate", s(&bad), "--config", s(&wide), "--output", s(&o), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "parse");
    assert!(rec["message"].as_str().unwrap().contains("line 3"), "{rec}");

    let out = run(&[
        "estimate",
        s(&dir.path().join("absent.csv")),
        "--config",
        s(&wide),
        "--output",
        s(&o),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "io");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\n[simulate]\nfields_t = [0.3]\nfield_units = \"T\"\n",
    );
    let out = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("field_units"));
}

#[test]
fn simulate_empty_list_is_no_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("schema_version = 1\n[simulate]\nfields_t = []\n{TINY_OBE}"),
    );
    let out = run(&["simulate", "--config", s(&cfg), "--output", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("no work"));
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_byte_identical_on_rerun_and_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("schema_version = 1\n[simulate]\nfields_t = [0.3, 0.4]\n{TINY_OBE}"),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["simulate", "--config", s(&cfg), "--output", s(&a)]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--output", s(&b), "--jobs", "2"])
        .status
        .success());
    let files = read_dir_bytes(&a);
    assert_eq!(files.len(), 4, "two spectra and two sidecars");
    assert_eq!(files, read_dir_bytes(&b));
    assert!(!dir.path().join("output").exists());
}

#[test]
fn dataset_noiseless_matches_simulate_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.toml",
        &format!("schema_version = 1\nseed = 11\n[dataset]\nfield_range_t = [0.2, 0.4]\ncount = 2\n{TINY_OBE}"),
    );
    let d1 = dir.path().join("d1");
    let d2 = dir.path().join("d2");
    assert!(run(&["generate-dataset", "--config", s(&cfg), "--output", s(&d1)]).status.success());
    assert!(run(&["generate-dataset", "--config", s(&cfg), "--output", s(&d2)]).status.success());
    assert_eq!(read_dir_bytes(&d1), read_dir_bytes(&d2));

    let manifest = DatasetManifest::load(&d1.join(MANIFEST_FILE)).unwrap();
    manifest.verify(&d1).unwrap();
    assert_eq!(manifest.entries.len(), 2);
    let fields: Vec<String> = manifest.entries.iter().map(|e| format!("{:?}", e.field_t)).collect();
    let sim_cfg = write(
        dir.path(),
        "s.toml",
        &format!("schema_version = 1\n[simulate]\nfields_t = [{}]\n{TINY_OBE}", fields.join(", ")),
    );
    let s_dir = dir.path().join("s");
    assert!(run(&["simulate", "--config", s(&sim_cfg), "--output", s(&s_dir)]).status.success());
    for (i, e) in manifest.entries.iter().enumerate() {
        assert!((0.2..=0.4).contains(&e.field_t));
        let sim = std::fs::read_dir(&s_dir)
            .unwrap()
            .map(|x| x.unwrap().path())
            .find(|p| {
                p.to_string_lossy().ends_with(".csv") && p.file_name().unwrap().to_string_lossy().starts_with(&format!("spectrum_{i:02}"))
            })
            .unwrap();
        assert_eq!(std::fs::read(d1.join(&e.file)).unwrap(), std::fs::read(sim).unwrap());
    }

    std::fs::write(d1.join(&manifest.entries[0].file), "tampered").unwrap();
    assert!(manifest.verify(&d1).is_err());
}

#[test]
fn calibrate_synthetic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScanSpec::default();
    let scan = spec
        .generate(&[("pd1_V", &|nu: f64| 1.0 - 0.2 * (-((nu - 9000.0) / 300.0).powi(2)).exp())])
        .unwrap();
    let trace = dir.path().join("scan.csv");
    scan.trace.write_csv(std::fs::File::create(&trace).unwrap()).unwrap();
    let anchor = spec.sample_at(0.0);
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!(
            "schema_version = 1\n[calibrate]\nreference_channel = \"pd1_V\"\n[calibrate.anchor]\ndetuning_mhz = 0.0\nsample = {anchor}\n"
        ),
    );
    let o = dir.path().join("o");
    let out = run(&["calibrate", s(&trace), "--config", s(&cfg), "--output", s(&o)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: toml::Table = std::fs::read_to_string(o.join("scan_calibration.toml")).unwrap().parse().unwrap();
    assert_eq!(report["marker_count"].as_integer(), Some(21));
    assert_eq!(report["interval_count"].as_integer(), Some(20));
    let span = report["axis_max_mhz"].as_float().unwrap() - report["axis_min_mhz"].as_float().unwrap();
    assert!((span - 30_600.0).abs() < 50.0, "{span}");
    assert!(o.join("scan_spectrum.csv").is_file());
    assert!(o.join("scan_peaks.csv").is_file());

    let no_etalon = write(dir.path(), "bare.csv", &{
        let mut t = String::from("time_s,pd1_V\n");
        for i in 0..1200 {
            t.push_str(&format!("{},{}\n", i as f64 * 1e-5, 1.0));
        }
        t
    });
    let out = run(&["calibrate", s(&no_etalon), "--config", s(&cfg), "--output", s(&o)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("pd3_V"));
}
