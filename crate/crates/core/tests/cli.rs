//! End-to-end runs of the `greenladder` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use greenladder::model::{ConfigSpace, QualityMetric};
use greenladder::pipeline::{load_data, load_models, SEED_ENV};
use greenladder::predictors::Target;
use greenladder::selector::{build_grid, select, Rho};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_greenladder"));
    cmd.env_remove(SEED_ENV);
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 20-video dataset and linear models for every target, built once.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    models: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let models = dir.path().join("models");
        ok(run(&["dataset", "synth", "--videos", "20", "--out", s(&data)]));
        ok(run(&["train", "--data", s(&data), "--out", s(&models), "--family", "linear"]));
        Fixture { _dir: dir, data, models }
    })
}

#[test]
fn synth_writes_full_ladder_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let text = ok(run(&["dataset", "synth", "--videos", "10", "--out", s(&a)]));
    assert!(text.starts_with("420 rows, 10 videos"));
    ok(run(&["dataset", "synth", "--videos", "10", "--out", s(&b)]));
    let csv = fs::read(&a).unwrap();
    assert_eq!(csv, fs::read(&b).unwrap());
    assert_eq!(csv.iter().filter(|&&c| c == b'\n').count(), 421);
}

#[test]
fn seed_precedence_is_flag_then_config_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let synth = |name: &str, extra: &[&str], env: Option<&str>| {
        let path = dir.path().join(name);
        let mut cmd = bin();
        cmd.args(extra).args(["dataset", "synth", "--videos", "3", "--out", s(&path)]);
        if let Some(v) = env {
            cmd.env(SEED_ENV, v);
        }
        ok(cmd.output().unwrap());
        fs::read(path).unwrap()
    };
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 9}"#).unwrap();
    let cfg = s(&cfg);

    let default = synth("d.csv", &[], None);
    let explicit42 = synth("e.csv", &["--seed", "42"], None);
    let seven = synth("f.csv", &["--seed", "7"], None);
    let env7 = synth("g.csv", &[], Some("7"));
    let nine = synth("h.csv", &["--seed", "9"], None);
    let cfg9_env7 = synth("i.csv", &["--config", cfg], Some("7"));
    let flag7_cfg9 = synth("j.csv", &["--config", cfg, "--seed", "7"], None);

    assert_eq!(default, explicit42);
    assert_ne!(default, seven);
    assert_eq!(env7, seven);
    assert_eq!(cfg9_env7, nine);
    assert_eq!(flag7_cfg9, seven);
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let out = run(&["dataset", "synth", "--videos", "3"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"rho_lsit": [0.1]}"#).unwrap();
    let out = run(&["--config", s(&cfg), "dataset", "synth", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho_lsit"));

    assert_eq!(code(&run(&["select", "--models", "m", "--rho", "1.5", "--anchor-enc-time", "1", "--anchor-dec-time", "1", "--anchor-vmaf", "50"])), 2);
    let out = bin().env(SEED_ENV, "not-a-number").args(["report", "--data", "x", "--out", "y"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(&["bogus"])), 2);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["report", "--data", s(&dir.path().join("nope.csv")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn impossible_fold_count_exits_4() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--data", s(&f.data), "--out", s(dir.path()), "--family", "linear", "--folds", "1000"]);
    assert_eq!(code(&out), 4, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_model_exits_5_and_names_the_file() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for t in ["enc_energy", "dec_energy", "vmaf"] {
        fs::copy(f.models.join(format!("{t}.json")), dir.path().join(format!("{t}.json"))).unwrap();
    }
    fs::write(dir.path().join("vmaf.json"), "{\"format_version\": 1, \"spec\": ").unwrap();
    let out = run(&["select", "--models", s(dir.path()), "--rho", "0.1", "--data", s(&f.data), "--video", "v000"]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vmaf.json"));
}

#[test]
fn single_family_single_target_training() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let text = ok(run(&["train", "--data", s(&f.data), "--out", s(dir.path()), "--family", "linear", "--target", "enc_energy"]));
    assert_eq!(text.matches("Prediction results for").count(), 1);
    assert!(text.contains("linear *"));
    assert!(dir.path().join("enc_energy.json").exists());
    assert!(!dir.path().join("vmaf.json").exists());
    let csv = fs::read_to_string(dir.path().join("model_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn select_matches_library_and_rho_one_takes_cheapest_cell() {
    let f = fixture();
    let space = ConfigSpace::default_ladder();
    let ds = load_data(&f.data).unwrap();
    let anchor = ds.anchor_of("v003", &space).unwrap();
    let models = load_models(&f.models, &[Target::EncEnergy, Target::DecEnergy, Target::Vmaf]).unwrap();
    let grid = build_grid(&models, &anchor, &space, QualityMetric::Vmaf).unwrap();

    let text = ok(run(&["select", "--models", s(&f.models), "--rho", "0.05", "--data", s(&f.data), "--video", "v003"]));
    let expected = select(&grid, Rho::new(0.05).unwrap()).unwrap();
    assert_eq!(text, format!("{}\n", serde_json::to_string_pretty(&expected).unwrap()));

    let text = ok(run(&["select", "--models", s(&f.models), "--rho", "1", "--data", s(&f.data), "--video", "v003"]));
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    let cheapest = grid.cells.iter().map(|c| c.e_total_hat).fold(f64::INFINITY, f64::min);
    assert_eq!(got["predicted"]["e_total_hat"].as_f64().unwrap(), cheapest);
    assert_eq!(got["feasible"].as_array().unwrap().len(), 42);

    // explicit anchor values route to the same grid
    let text = ok(run(&[
        "select",
        "--models",
        s(&f.models),
        "--rho",
        "0.05",
        "--video",
        "v003",
        "--anchor-enc-time",
        &anchor.enc_time.to_string(),
        "--anchor-dec-time",
        &anchor.dec_time.to_string(),
        "--anchor-vmaf",
        &anchor.vmaf.to_string(),
        "--anchor-psnr",
        &anchor.psnr.to_string(),
    ]));
    assert_eq!(text, format!("{}\n", serde_json::to_string_pretty(&expected).unwrap()));
}

#[test]
fn evaluate_at_rho_zero_reports_no_savings() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(run(&["evaluate", "--data", s(&f.data), "--models", s(&f.models), "--rho", "0,0.3", "--out", s(dir.path())]));
    let csv = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0");
    assert!(rows[0][3..].iter().all(|v| *v == "0.0000"), "{:?}", rows[0]);
    assert!(rows[1][5].parse::<f64>().unwrap() > 0.0);

    ok(run(&["evaluate", "--data", s(&f.data), "--models", s(&f.models), "--rho", "0", "--out", s(dir.path())]));
    let csv = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(csv.lines().nth(1).unwrap().split(',').collect::<Vec<_>>()[..3], rows[0][..3]);
}

#[test]
fn analyze_and_report_write_their_tables() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(run(&["analyze", "--data", s(&f.data), "--out", s(dir.path()), "--no-sweep"]));
    let matrix = fs::read_to_string(dir.path().join("correlation_matrix.csv")).unwrap();
    let lines: Vec<&str> = matrix.lines().collect();
    assert_eq!(lines.len(), 43);
    assert!(lines.iter().all(|l| l.split(',').count() == 43));
    assert_eq!(fs::read_to_string(dir.path().join("anchor_ranking.csv")).unwrap().lines().count(), 43);
    assert!(!dir.path().join("anchor_sweep.csv").exists());

    ok(run(&["report", "--data", s(&f.data), "--out", s(dir.path())]));
    let agg = fs::read_to_string(dir.path().join("aggregates_by_resolution.csv")).unwrap();
    let enc: Vec<f64> = agg
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("enc_energy_wh"))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(enc.len(), 6);
    assert!(enc.windows(2).all(|w| w[1] > w[0]), "{enc:?}");
    assert!(dir.path().join("aggregates_by_qp.csv").exists());
}

#[cfg(unix)]
#[test]
fn measure_runs_external_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"space": {"heights": [360, 720], "qps": [22, 47]}}"#).unwrap();
    let (a, b) = (dir.path().join("clipA.y4m"), dir.path().join("clipB.y4m"));
    fs::write(&a, "a").unwrap();
    fs::write(&b, "b").unwrap();
    let encode = r#": {width}; cat {input} > {output}; printf '{"bitrate_kbps": %s, "psnr_db": 40, "vmaf": %s}' $(( {height} * 2 )) $(( 100 - {qp} )) > {sidecar}"#;
    let out = dir.path().join("measured.csv");
    let text = ok(run(&[
        "--config",
        s(&cfg),
        "dataset",
        "measure",
        "--encode-template",
        encode,
        "--decode-template",
        "cat {output} > /dev/null",
        "--work-dir",
        s(&dir.path().join("work")),
        "--video",
        s(&a),
        "--video",
        s(&b),
        "--out",
        s(&out),
    ]));
    assert!(text.starts_with("8 rows, 2 videos"), "{text}");
    let ds = load_data(&out).unwrap();
    let rec = ds.records().iter().find(|r| r.video_id == "clipB" && r.rep.height() == 720 && r.rep.qp == 22).unwrap();
    assert_eq!((rec.bitrate, rec.vmaf, rec.psnr), (1440.0, 78.0, 40.0));
    assert!(rec.enc_energy > 0.0 && rec.dec_energy > 0.0);

    let out = run(&["dataset", "measure", "--encode-template", "exit 1 {input} {width} {height} {qp} {output}", "--decode-template", "true", "--video", s(&a), "--out", s(&dir.path().join("x.csv"))]);
    assert_ne!(code(&out), 0);
}
