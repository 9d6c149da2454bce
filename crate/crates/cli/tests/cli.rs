use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msw_core::circuits::ParallelRlc;
use msw_core::extraction::coupling_from_ratio;
use msw_core::spectra::{
    parse_touchstone, s_to_z, ComplexSpectrum, FrequencyGrid, SpectrumKind, DEFAULT_Z_REF,
};
use num_complex::Complex64;
use serde_json::Value;
use tempfile::TempDir;

fn mswkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mswkit"))
        .args(args)
        .output()
        .expect("spawn mswkit")
}

fn ok(args: &[&str]) -> Output {
    let out = mswkit(args);
    assert!(
        out.status.success(),
        "mswkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_z(dir: &Path, name: &str, grid: &FrequencyGrid, f: impl Fn(f64) -> Complex64) -> PathBuf {
    let z = ComplexSpectrum::impedance(grid.clone(), grid.points().iter().map(|&x| f(x)).collect()).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&z).unwrap()).unwrap();
    path
}

fn metric_rows(dir: &Path) -> Vec<Value> {
    read_json(&dir.join("metrics.json")).as_array().unwrap().clone()
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn synth_into(tmp: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = tmp.path().join(name);
    let cfg = fixture("rhyg_sweep.json");
    let mut args = vec!["synth", "--config", s(&cfg), "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn matched_load_converts_to_reference_impedance() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("z.csv");
    ok(&["convert", "--z", "--input", s(&fixture("matched_load.s1p")), "--out", s(&out)]);
    let text = std::fs::read(&out).unwrap();
    let z = ComplexSpectrum::read_csv(&text[..], SpectrumKind::Impedance, DEFAULT_Z_REF).unwrap();
    assert_eq!(z.len(), 10);
    for v in z.values() {
        assert_eq!(*v, Complex64::new(50.0, 0.0));
    }
}

#[test]
fn convert_round_trip_is_exact() {
    let tmp = TempDir::new().unwrap();
    let src = core_fixture("resonator_ri_ghz.s1p");
    let json = tmp.path().join("a.json");
    let back = tmp.path().join("b.s1p");
    ok(&["convert", "--input", s(&src), "--out", s(&json)]);
    ok(&["convert", "--input", s(&json), "--out", s(&back)]);
    let a = parse_touchstone(&std::fs::read_to_string(&src).unwrap()).unwrap();
    let b = parse_touchstone(&std::fs::read_to_string(&back).unwrap()).unwrap();
    assert_eq!(a.freqs(), b.freqs());
    assert_eq!(a.values(), b.values());
}

#[test]
fn malformed_input_fails_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x.csv");
    let res = mswkit(&["convert", "--input", s(&core_fixture("malformed_bad_option.s1p")), "--out", s(&out)]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn single_branch_gives_one_row_with_its_q() {
    let tmp = TempDir::new().unwrap();
    let branch = ParallelRlc::from_resonance(1000.0, 10e9, 50.0).unwrap();
    let grid = FrequencyGrid::linspace(9e9, 11e9, 4001).unwrap();
    let input = write_z(tmp.path(), "branch.json", &grid, |f| branch.impedance(f));
    let out = tmp.path().join("x");
    ok(&["extract", "--input", s(&input), "--out", s(&out)]);
    let rows = metric_rows(&out);
    assert_eq!(rows.len(), 1, "{rows:?}");
    let q = rows[0]["q"].as_f64().unwrap();
    assert!((q / 50.0 - 1.0).abs() < 0.005, "{q}");
    for f in ["metrics.csv", "zmag_input.svg", "qcircle_input.svg", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn reference_device_reaches_expected_figure_of_merit() {
    // Series inductance plus one branch, sized so that the peak/anti-resonance
    // ratio encodes kt² = 0.228 at Q = 839.
    let (q, kt2) = (839.0, 0.228);
    let mut lo = 0.5;
    let mut hi = 0.9999;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if coupling_from_ratio(mid).unwrap() > kt2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let branch = ParallelRlc::from_resonance(5000.0, 11e9, q).unwrap();
    let l_s = branch.l_m / (1.0 / (r * r) - 1.0);
    let grid = FrequencyGrid::linspace(9e9, 14e9, 20001).unwrap();
    let tmp = TempDir::new().unwrap();
    let input = write_z(tmp.path(), "device.json", &grid, |f| {
        Complex64::new(0.0, 2.0 * std::f64::consts::PI * f * l_s) + branch.impedance(f)
    });
    let out = tmp.path().join("x");
    ok(&["extract", "--input", s(&input), "--out", s(&out)]);
    let rows = metric_rows(&out);
    assert_eq!(rows.len(), 1, "{rows:?}");
    let fom = rows[0]["fom"].as_f64().unwrap();
    assert!((fom / (q * kt2) - 1.0).abs() < 0.02, "FOM {fom}");
}

#[test]
fn flat_spectrum_gives_empty_table() {
    let tmp = TempDir::new().unwrap();
    let grid = FrequencyGrid::linspace(1e9, 2e9, 101).unwrap();
    let input = write_z(tmp.path(), "flat.json", &grid, |_| Complex64::new(50.0, 0.0));
    let out = tmp.path().join("x");
    ok(&["extract", "--input", s(&input), "--out", s(&out)]);
    assert!(metric_rows(&out).is_empty());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn synth_writes_one_file_per_bias_and_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = synth_into(&tmp, "sweep", &[]);
    let manifest = read_json(&out.join("manifest.json"));
    let entries = manifest["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        assert!(out.join(e["path"].as_str().unwrap()).exists());
    }
    assert!(out.join("zero_bias.s1p").exists());
}

#[test]
fn synth_rejects_invalid_model_without_writing() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("rhyg_sweep.json"))
        .unwrap()
        .replace("\"r_m\": 800", "\"r_m\": -800");
    std::fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("sweep");
    let res = mswkit(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn noiseless_synth_extracts_tuning_law_frequencies() {
    let tmp = TempDir::new().unwrap();
    let sweep = synth_into(&tmp, "sweep", &[]);
    let out = tmp.path().join("x");
    ok(&["extract", "--manifest", s(&sweep.join("manifest.json")), "--out", s(&out)]);
    let rows = metric_rows(&out);
    let step = 5.5e9 / 1100.0;
    for b in [0.494, 0.5276, 0.5945] {
        let f0 = 29.9e9 * (b - 0.193);
        let hit = rows.iter().any(|r| {
            (r["bias_mt"].as_f64().unwrap() - b * 1e3).abs() < 1e-9
                && (r["f_p_hz"].as_f64().unwrap() - f0).abs() <= step / 2.0
        });
        assert!(hit, "bias {b}: {rows:?}");
    }
}

#[test]
fn synth_manifest_feeds_fit_and_recovers_exactly() {
    let tmp = TempDir::new().unwrap();
    let sweep = synth_into(&tmp, "sweep", &[]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--manifest", s(&sweep.join("manifest.json")), "--topology", "rhyg", "--out", s(&out)]);
    let fit = read_json(&out.join("fit.json"));
    let per_bias = fit["per_bias"].as_array().unwrap();
    assert_eq!(per_bias.len(), 3);
    for (i, bf) in per_bias.iter().enumerate() {
        let spec = parse_touchstone(&std::fs::read_to_string(sweep.join(format!("bias_{i:03}.s1p"))).unwrap()).unwrap();
        let z = s_to_z(&spec).unwrap();
        let rms = (z.values().iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt();
        let resid = bf["result"]["residual_rms"].as_f64().unwrap();
        assert!(resid < 1e-8 * rms, "bias {i}: {resid} vs {rms}");
        assert_eq!(bf["no_resonance"], Value::Bool(false));
    }
    for f in ["branches.csv", "overlay_zero_bias.svg", "overlay_bias_002.svg", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_fit_outputs() {
    let tmp = TempDir::new().unwrap();
    let sweep = synth_into(&tmp, "sweep", &["--seed", "11"]);
    let noisy = tmp.path().join("noisy");
    let cfg = tmp.path().join("noisy.json");
    let mut v = read_json(&fixture("rhyg_sweep.json"));
    v["snr_db"] = serde_json::json!(40.0);
    std::fs::write(&cfg, v.to_string()).unwrap();
    ok(&["synth", "--config", s(&cfg), "--out", s(&noisy)]);
    let a = std::fs::read(noisy.join("bias_000.s1p")).unwrap();
    let b = std::fs::read(sweep.join("bias_000.s1p")).unwrap();
    assert_ne!(a, b);

    let out = tmp.path().join("fit");
    let args = ["fit", "--manifest", &format!("{}", noisy.join("manifest.json").display()), "--topology", "rhyg", "--seed", "5", "--out", s(&out)];
    ok(&args);
    let first = dir_snapshot(&out);
    ok(&args);
    assert_eq!(first, dir_snapshot(&out));
}

#[test]
fn missing_zero_bias_fails_before_writing() {
    let tmp = TempDir::new().unwrap();
    let sweep = synth_into(&tmp, "sweep", &[]);
    let out = tmp.path().join("fit");
    let missing = tmp.path().join("nope.s1p");
    let res = mswkit(&[
        "fit", "--manifest", s(&sweep.join("manifest.json")), "--zero-bias", s(&missing),
        "--topology", "rhyg", "--out", s(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.s1p"));
    assert!(!out.exists());
}

fn anticross_gap(tmp: &TempDir, name: &str, points: usize, bias_points: usize) -> Value {
    let cfg = tmp.path().join(format!("{name}.json"));
    let mut v = read_json(&fixture("coupled.json"));
    v["grid"]["points"] = serde_json::json!(points);
    v["bias_grid"]["points"] = serde_json::json!(bias_points);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = tmp.path().join(name);
    ok(&["anticross", "--config", s(&cfg), "--out", s(&out)]);
    for f in ["heatmap.csv", "heatmap.json", "heatmap.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    read_json(&out.join("splitting.json"))
}

#[test]
fn anticross_recovers_configured_splitting() {
    let tmp = TempDir::new().unwrap();
    let split = anticross_gap(&tmp, "a", 1501, 121);
    assert_eq!(split["anticrossing"], Value::Bool(true));
    let two_g = split["two_g_hz"].as_f64().unwrap();
    assert!((two_g / 0.6e9 - 1.0).abs() < 0.05, "{two_g}");
}

#[test]
fn anticross_gap_converges_under_refinement() {
    let tmp = TempDir::new().unwrap();
    let coarse = anticross_gap(&tmp, "c", 1501, 121)["two_g_hz"].as_f64().unwrap();
    let fine = anticross_gap(&tmp, "f", 3001, 241)["two_g_hz"].as_f64().unwrap();
    assert!((coarse / fine - 1.0).abs() < 0.01, "{coarse} vs {fine}");
}

#[test]
fn decoupled_model_reports_no_anticrossing() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("decoupled.json");
    let v = serde_json::json!({
        "model": {
            "topology": "rhyg",
            "series": {"r_0": 0.5, "l_0": 1e-9, "c_0": 2.5330295910584444e-13}
        },
        "grid": {"start_hz": 8.5e9, "stop_hz": 11.5e9, "points": 601},
        "bias_grid": {"start_t": 0.494, "stop_t": 0.5609, "points": 21}
    });
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = tmp.path().join("x");
    ok(&["anticross", "--config", s(&cfg), "--out", s(&out)]);
    assert!(out.join("heatmap.csv").exists());
    let split = read_json(&out.join("splitting.json"));
    assert_eq!(split["anticrossing"], Value::Bool(false));
    assert!(split.get("two_g_hz").is_none());
}

#[test]
fn rerunning_extract_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let sweep = synth_into(&tmp, "sweep", &[]);
    let out = tmp.path().join("x");
    let args = ["extract", "--manifest", &format!("{}", sweep.join("manifest.json").display()), "--out", s(&out)];
    ok(&args);
    let first = dir_snapshot(&out);
    ok(&args);
    assert_eq!(first, dir_snapshot(&out));
}
