use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mobcast::backtest::ModelKind;
use mobcast::metrics::spearman;
use mobcast::report::{read_ci_csv, read_predictions_csv};

fn mobcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobcast")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic pair: 12 counties × 100 days gives 13 windows with the defaults.
fn small_synth(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("synth");
    let o = mobcast(&["synth", "--out", s(&out), "--counties", "12", "--days", "100", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (out.join("cases.csv"), out.join("mobility.csv"))
}

#[test]
fn synth_writes_panels_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, mobility) = small_synth(dir.path());
    let text = fs::read_to_string(&cases).unwrap();
    assert!(text.starts_with("date,fips,value\n2020-02-17,00001,"));
    assert_eq!(text.lines().count(), 1 + 12 * 100);
    assert!(mobility.exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth/synth_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["generator"], "rand_chacha::ChaCha8Rng (seed_from_u64)");
    assert_eq!(meta["config"]["seed"], 7);

    // same seed, same bytes
    let again = dir.path().join("again");
    assert!(mobcast(&["synth", "--out", s(&again), "--counties", "12", "--days", "100", "--seed", "7"])
        .status
        .success());
    assert_eq!(fs::read(&cases).unwrap(), fs::read(again.join("cases.csv")).unwrap());
}

#[test]
fn backtest_outputs_and_recomputable_ci() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, mobility) = small_synth(dir.path());
    let out = dir.path().join("out");
    let o = mobcast(&[
        "backtest",
        "--cases",
        s(&cases),
        "--mobility",
        &format!("m={}", s(&mobility)),
        "--out",
        s(&out),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["predictions_m.csv", "ci_m.csv", "ci_m.svg", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));

    // every ci equals rho_mobility - rho_baseline recomputed from the predictions
    let records = read_predictions_csv(&out.join("predictions_m.csv")).unwrap();
    let cis = read_ci_csv(&out.join("ci_m.csv")).unwrap();
    assert_eq!(cis.len(), 13 * 5);
    for p in &cis {
        let rho = |kind| {
            let (pred, act): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.date == p.date && r.lookahead == p.lookahead && r.model_kind == kind)
                .map(|r| (r.predicted, r.actual))
                .unzip();
            assert_eq!(pred.len(), 12);
            spearman(&pred, &act).unwrap().rho
        };
        let (m, b) = (rho(ModelKind::Mobility), rho(ModelKind::Baseline));
        assert!((p.ci - (m - b)).abs() <= 1e-12);
        assert!((p.rho_mobility - m).abs() <= 1e-12);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["estimator"], "elasticnet");
    assert_eq!(summary["datasets"]["m"]["n_counties"], 12);
    assert!(summary["datasets"]["m"]["lookaheads"]["7"]["positive_spans"].is_array());

    // `report` re-derives the same ci table
    let rep = dir.path().join("rep");
    let o = mobcast(&["report", "--predictions", s(&out.join("predictions_m.csv")), "--out", s(&rep)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("ci_m.csv")).unwrap(), fs::read(rep.join("ci_m.csv")).unwrap());
    assert_eq!(fs::read(out.join("ci_m.svg")).unwrap(), fs::read(rep.join("ci_m.svg")).unwrap());
}

#[test]
fn duplicated_mobility_under_two_labels_gives_identical_ci() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, mobility) = small_synth(dir.path());
    let copy = dir.path().join("copy.csv");
    fs::copy(&mobility, &copy).unwrap();
    let out = dir.path().join("out");
    let o = mobcast(&[
        "backtest",
        "--cases",
        s(&cases),
        "--mobility",
        &format!("a={}", s(&mobility)),
        "--mobility",
        &format!("b={}", s(&copy)),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("ci_a.csv")).unwrap(), fs::read(out.join("ci_b.csv")).unwrap());
    let pa = fs::read_to_string(out.join("predictions_a.csv")).unwrap();
    let pb = fs::read_to_string(out.join("predictions_b.csv")).unwrap();
    assert_eq!(pa.replace("\na,", "\n"), pb.replace("\nb,", "\n"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, mobility) = small_synth(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# small run\ncases = {}\nmobility = m={}\nout = cfg_out\nlookaheads = 1,7\nsmooth = 1\nestimator = ols\n",
            s(&cases),
            s(&mobility)
        ),
    )
    .unwrap();
    let o = mobcast(&["backtest", "--config", s(&cfg), "--lookaheads", "7,14"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cis = read_ci_csv(&dir.path().join("cfg_out/ci_m.csv")).unwrap();
    let mut ls: Vec<u32> = cis.iter().map(|p| p.lookahead).collect();
    ls.sort_unstable();
    ls.dedup();
    assert_eq!(ls, vec![7, 14]);
    let summary = fs::read_to_string(dir.path().join("cfg_out/summary.json")).unwrap();
    assert!(summary.contains("\"estimator\": \"ols\""));
}

#[test]
fn missing_case_csv_is_input_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mobility) = small_synth(dir.path());
    let out = dir.path().join("out");
    let o = mobcast(&[
        "backtest",
        "--cases",
        s(&dir.path().join("absent.csv")),
        "--mobility",
        &format!("m={}", s(&mobility)),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.csv"));
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (cases, mobility) = small_synth(dir.path());
    let m = format!("m={}", s(&mobility));
    let out = dir.path().join("out");

    assert_eq!(mobcast(&["--help"]).status.code(), Some(0));
    assert_eq!(mobcast(&["--version"]).status.code(), Some(0));
    assert_eq!(mobcast(&["backtest", "--no-such-flag"]).status.code(), Some(3));
    assert_eq!(mobcast(&["frobnicate"]).status.code(), Some(3));
    // no mobility dataset
    assert_eq!(mobcast(&["backtest", "--cases", s(&cases), "--out", s(&out)]).status.code(), Some(3));
    // bad estimator, bad lookaheads, bad baseline window
    for extra in [["--estimator", "forest"], ["--lookaheads", "0,7"], ["--baseline-window", "2020-03-07"]] {
        let mut args = vec!["backtest", "--cases", s(&cases), "--mobility", &m, "--out", s(&out)];
        args.extend(extra);
        assert_eq!(mobcast(&args).status.code(), Some(3), "{extra:?}");
    }
    // date range shorter than one window
    let o = mobcast(&[
        "backtest",
        "--cases",
        s(&cases),
        "--mobility",
        &m,
        "--out",
        s(&out),
        "--start",
        "2020-02-20",
        "--end",
        "2020-04-30",
    ]);
    assert_eq!(o.status.code(), Some(3));
    // synthetic panel shorter than a window
    assert_eq!(mobcast(&["synth", "--out", s(&out), "--days", "50"]).status.code(), Some(3));
    // conflicting duplicate in an input
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,fips,value\n2020-03-20,01001,1\n2020-03-20,01001,2\n").unwrap();
    let o = mobcast(&["validate", "--cases", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conflicting duplicate"));
    assert!(!out.exists());
}

#[test]
fn validate_reports_usable_and_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("nyt.csv");
    // NYT layout; 01007 misses a day, 01009 appears twice per day with identical values
    let mut text = String::from("date,county,state,fips,cases,deaths\n");
    for d in 1..=5 {
        for (fips, skip) in [("01001", 0), ("01003", 0), ("01005", 0), ("01007", 3), ("01009", 0)] {
            if d != skip {
                text.push_str(&format!("2020-03-0{d},X,Alabama,{fips},{},0\n", d * 10));
            }
        }
        text.push_str(&format!("2020-03-0{d},X,Alabama,01009,{},0\n", d * 10));
    }
    fs::write(&cases, text).unwrap();
    let near = dir.path().join("near.csv");
    let far = dir.path().join("far.csv");
    let mut a = String::from("date,fips,value\n");
    let mut b = a.clone();
    for d in 1..=5 {
        a.push_str(&format!("2020-03-0{d},01001,1\n2020-03-0{d},01003,1\n"));
        b.push_str(&format!("2020-03-0{d},48001,1\n"));
    }
    fs::write(&near, a).unwrap();
    fs::write(&far, b).unwrap();

    let o = mobcast(&["validate", "--cases", s(&cases)]);
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("cases: counties=5 dates=2020-03-01..2020-03-05 days=5 complete=4 usable=4"), "{out}");

    let o = mobcast(&["validate", "--cases", s(&cases), "--mobility", &format!("near={}", s(&near))]);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("intersection: dates=2020-03-01..2020-03-05 days=5 counties=2"), "{out}");
    assert!(!out.contains("WARNING"));

    let o = mobcast(&["validate", "--cases", s(&cases), "--mobility", &format!("far={}", s(&far))]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("counties=0"), "{out}");
    assert!(out.contains("WARNING"), "{out}");
}
