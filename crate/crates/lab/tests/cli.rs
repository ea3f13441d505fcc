use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histories_lab::{parse_scenario, parse_scenario_str, validate, LabError, Scenario};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histories-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_fixture(sub: &str, name: &str, out: &Path) -> Output {
    lab(&[
        sub,
        "--scenario",
        fixture(name).to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ])
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn qubit_fixture_gives_four_histories() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_fixture("histories", "qubit_histories.toml", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("qubit_histories.csv"));
    assert_eq!(rows.len(), 4);
    // H = σ_x: |⟨b|U(t)|a⟩|² is cos²t when a = b and sin²t otherwise.
    let stay = |t: f64| t.cos().powi(2);
    let (t1, t2) = (0.5f64, 1.2f64);
    let expected = [
        stay(t1) * stay(t2 - t1),
        stay(t1) * (1.0 - stay(t2 - t1)),
        (1.0 - stay(t1)) * (1.0 - stay(t2 - t1)),
        (1.0 - stay(t1)) * stay(t2 - t1),
    ];
    let mut total = 0.0;
    for (row, e) in rows.iter().zip(expected) {
        let p: f64 = row[2].parse().unwrap();
        assert!((p - e).abs() < 1e-12, "{row:?} vs {e}");
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-9);
    let summary = json(&dir.path().join("qubit_histories.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["scenario"]["epsilon"], 1e-3);
    assert_eq!(summary["scenario"]["history_cap"], 4096);
}

#[test]
fn single_time_fixture_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_fixture("compare-bohm-dh", "single_time.toml", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("single_time.json"));
    assert_eq!(summary["diagnostics"]["agreement"], true);
    assert_eq!(summary["diagnostics"]["decoherent"], true);
}

#[test]
fn unknown_keys_are_named() {
    let text = fs::read_to_string(fixture("qubit_histories.toml"))
        .unwrap()
        .replace("kind = \"histories\"", "kind = \"histories\"\nepsilonn = 1e-3");
    let err = parse_scenario_str(&text, "typo.toml").unwrap_err();
    assert!(err.to_string().contains("epsilonn"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    fs::write(&path, &text).unwrap();
    let out = lab(&["histories", "--scenario", path.to_str().unwrap(), "--validate-only"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilonn"));
}

#[test]
fn missing_keys_are_named() {
    let text = "kind = \"bohm\"\ncount = 10\ndt = 0.1\nt_final = 1.0\npackets = []\n";
    let err = parse_scenario_str(text, "short.toml").unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
}

#[test]
fn non_positive_dt_is_rejected() {
    for dt in ["0.0", "-0.01"] {
        let text = fs::read_to_string(fixture("equivariance.toml"))
            .unwrap()
            .replace("dt = 0.01", &format!("dt = {dt}"));
        let scenario = parse_scenario_str(&text, "dt.toml").unwrap();
        let err = validate(&scenario).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`dt`") && msg.contains("dt > 0"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn unstable_dt_is_rejected_with_a_suggestion() {
    let text = fs::read_to_string(fixture("equivariance.toml"))
        .unwrap()
        .replace("dt = 0.01", "dt = 5.0")
        .replace("t_final = 4.5", "t_final = 5.0")
        .replace("record_times = [1.5, 3.0]", "record_times = []");
    let err = validate(&parse_scenario_str(&text, "dt.toml").unwrap()).unwrap_err();
    assert!(err.to_string().contains("reduce dt"), "{err}");
}

#[test]
fn kind_must_match_subcommand() {
    let out = lab(&[
        "bohm",
        "--scenario",
        fixture("qubit_histories.toml").to_str().unwrap(),
        "--validate-only",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn validate_only_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&[
        "bohm",
        "--scenario",
        fixture("equivariance.toml").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--validate-only",
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn every_fixture_validates() {
    for entry in fs::read_dir(fixture("")).unwrap() {
        let path = entry.unwrap().path();
        let scenario = parse_scenario(&path).unwrap();
        validate(&scenario).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (sub, name) in [
        ("histories", "ring_coarse.toml"),
        ("compare-copenhagen", "copenhagen.toml"),
        ("compare-bohm-dh", "single_time.toml"),
    ] {
        assert!(run_fixture(sub, name, a.path()).status.success());
        let out = Command::new(env!("CARGO_BIN_EXE_histories-lab"))
            .env("HISTORIES_LAB_THREADS", "3")
            .args([
                sub,
                "--scenario",
                fixture(name).to_str().unwrap(),
                "--out-dir",
                b.path().to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn seed_override_changes_bohm_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let path = fixture("single_time.toml");
    let p = path.to_str().unwrap();
    assert!(lab(&["compare-bohm-dh", "--scenario", p, "--out-dir", a.path().to_str().unwrap()])
        .status
        .success());
    assert!(lab(&[
        "compare-bohm-dh",
        "--scenario",
        p,
        "--out-dir",
        b.path().to_str().unwrap(),
        "--seed",
        "99"
    ])
    .status
    .success());
    let (ja, jb) = (
        json(&a.path().join("single_time.json")),
        json(&b.path().join("single_time.json")),
    );
    assert_eq!(jb["scenario"]["seed"], 99);
    assert_ne!(ja["rows"], jb["rows"]);
}

#[test]
fn echo_reparses_to_the_same_scenario() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, name) in [
        ("histories", "qubit_histories.toml"),
        ("measurement", "measurement.toml"),
        ("pathsum", "pathsum.toml"),
        ("compare-bohm-dh", "single_time.toml"),
    ] {
        assert!(run_fixture(sub, name, dir.path()).status.success());
        let original = parse_scenario(&fixture(name)).unwrap();
        let stem = original.name();
        let summary = json(&dir.path().join(format!("{stem}.json")));
        let echoed: Scenario = serde_json::from_value(summary["scenario"].clone()).unwrap();
        assert_eq!(echoed, original);
        let toml_text = toml::to_string(&echoed).unwrap();
        assert_eq!(parse_scenario_str(&toml_text, "echo").unwrap(), original);
    }
}

#[test]
fn failed_writes_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    // A directory where the JSON summary should go makes the last write fail.
    fs::create_dir(dir.path().join("qubit_histories.json")).unwrap();
    let out = run_fixture("histories", "qubit_histories.toml", dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("qubit_histories.csv").exists());
}

#[test]
fn bad_thread_counts_are_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_histories-lab"))
        .env("HISTORIES_LAB_THREADS", "0")
        .args([
            "histories",
            "--scenario",
            fixture("qubit_histories.toml").to_str().unwrap(),
            "--out-dir",
            tempfile::tempdir().unwrap().path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let e = LabError::Numerical("sum off".into());
    assert_eq!(e.exit_code(), 3);
    let core = LabError::core(
        "dt",
        histories_lab_core::Error::Numerical("norm drift".into()),
    );
    assert_eq!(core.exit_code(), 3);
}

const BOHM_TEMPLATE: &str = r#"
kind = "bohm"
count = COUNT
dt = DT
t_final = TFINAL

[grid]
axes = [{ points = POINTS, spacing = SPACING, lower = -3.2, periodic = PERIODIC, mass = MASS }]

[[packets]]
center = [0.0]
width = [WIDTH]
"#;

fn float_text() -> impl Strategy<Value = String> {
    prop_oneof![
        (-10.0f64..10.0).prop_map(|v| format!("{v:?}")),
        Just("0.0".to_string()),
        Just("nan".to_string()),
        Just("inf".to_string()),
        Just("-inf".to_string()),
        Just("1e300".to_string()),
        Just("-1e-300".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fuzzed_bohm_scenarios_respect_preconditions(
        count in 0usize..4,
        dt in float_text(),
        t_final in float_text(),
        points in 0usize..40,
        spacing in float_text(),
        periodic in any::<bool>(),
        mass in float_text(),
        width in float_text(),
    ) {
        let text = BOHM_TEMPLATE
            .replace("COUNT", &count.to_string())
            .replace("DT", &dt)
            .replace("TFINAL", &t_final)
            .replace("POINTS", &points.to_string())
            .replace("SPACING", &spacing)
            .replace("PERIODIC", &periodic.to_string())
            .replace("MASS", &mass)
            .replace("WIDTH", &width);
        let Ok(scenario) = parse_scenario_str(&text, "fuzz") else { return Ok(()) };
        let Scenario::Bohm(s) = &scenario else { panic!("kind changed") };
        if validate(&scenario).is_ok() {
            prop_assert!(s.count >= 1);
            prop_assert!(s.dt.is_finite() && s.dt > 0.0);
            prop_assert!(s.t_final.is_finite() && s.t_final > 0.0);
            let a = &s.grid.axes[0];
            prop_assert!(a.points >= 4);
            prop_assert!(a.spacing.is_finite() && a.spacing > 0.0);
            prop_assert!(a.mass.is_finite() && a.mass > 0.0);
            prop_assert!(s.packets[0].width[0].is_finite() && s.packets[0].width[0] > 0.0);
        }
    }

    #[test]
    fn fuzzed_histories_scenarios_respect_preconditions(
        epsilon in float_text(),
        t1 in float_text(),
        t2 in float_text(),
        basis in 0usize..4,
        cap in 0usize..8,
        qubit in 0usize..3,
    ) {
        let text = format!(
            "kind = \"histories\"\nepsilon = {epsilon}\nhistory_cap = {cap}\n\
             [model]\ntype = \"qubit-register\"\nqubits = 1\nfield_x = 1.0\n\
             [state]\nbasis = {basis}\n\
             [[alternatives]]\ntime = {t1}\nprojectors = {{ type = \"qubit\", qubit = {qubit} }}\n\
             [[alternatives]]\ntime = {t2}\nprojectors = {{ type = \"qubit\", qubit = 0, basis = \"x\" }}\n"
        );
        let Ok(scenario) = parse_scenario_str(&text, "fuzz") else { return Ok(()) };
        let Scenario::Histories(s) = &scenario else { panic!("kind changed") };
        if validate(&scenario).is_ok() {
            prop_assert!(s.epsilon.is_finite() && s.epsilon > 0.0);
            prop_assert!(s.history_cap >= 4);
            prop_assert!(basis < 2 && qubit == 0);
            prop_assert!(s.alternatives[0].time < s.alternatives[1].time);
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_scenario_str(&text, "noise");
    }
}
