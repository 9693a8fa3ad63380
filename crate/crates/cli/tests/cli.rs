use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const COORDINATE_POINTS: &str = r#"{"n": 2, "comment": "x0x1, x0x2, x1x2",
  "quadrics": [[[0,0.5,0],[0.5,0,0],[0,0,0]], [[0,0,0.5],[0,0,0],[0.5,0,0]], [[0,0,0],[0,0,0.5],[0,0.5,0]]]}"#;
const ZERO: &str = r#"{"n": 2, "quadrics": [[0,0,0,0,0,0,0,0,0], [0,0,0,0,0,0,0,0,0], [0,0,0,0,0,0,0,0,0]]}"#;
const TWO_FORMS: &str = r#"{"n": 2, "quadrics": [[[1,0,0],[0,1,0],[0,0,-1]], [[0,1,0],[1,0,0],[0,0,0]]]}"#;

fn triquad(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_triquad")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn job(dir: &Path, name: &str, input: &str, command: &str, extra: &[&str]) -> (i32, String, std::path::PathBuf) {
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, input).unwrap();
    let out = dir.join(name);
    let mut args = vec![
        command,
        "--input",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let (code, stderr) = triquad(&args);
    (code, stderr, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn coordinate_points_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr, out) = job(dir.path(), "points", COORDINATE_POINTS, "verify", &["--depth", "5"]);
    assert_eq!(code, 0, "{stderr}");
    let verdict = json(&out.join("verdict.json"));
    assert_eq!(verdict["verdict"], "PASS");
    assert_eq!(verdict["oracle_estimate"], 3);
    assert_eq!(verdict["authoritative"], true);
    let refined = verdict["refined_bound"].as_i64().unwrap();
    assert!((3..=6).contains(&refined));
    let sample = fs::read_to_string(out.join("sample.csv")).unwrap();
    assert!(sample.starts_with("x0,x1,x2,cluster_id\n"));
    let clusters: std::collections::BTreeSet<&str> =
        sample.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(clusters.len(), 3);
    let report = json(&out.join("report.json"));
    assert_eq!(report["oracle"]["estimate"], 3);
}

#[test]
fn zero_pencil_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr, out) = job(dir.path(), "zero", ZERO, "trace", &["--depth", "4"]);
    assert_eq!(code, 0, "{stderr}");
    let report = json(&out.join("report.json"));
    let a = &report["analysis"];
    assert_eq!(a["bounds"]["oval_count"], 0);
    assert_eq!(a["bounds"]["mu"], a["bounds"]["nu"]);
    assert_eq!(a["bounds"]["refined_bound"], 3);
    for key in [
        "epsilon_used",
        "mesh_depth",
        "seed",
        "stabilization_iterations",
        "authority",
    ] {
        assert!(!a[key].is_null(), "{key}");
    }
    assert_eq!(
        fs::read_to_string(out.join("ovals.csv")).unwrap(),
        "oval_id,point_index,x,y,z\n"
    );
}

#[test]
fn trace_writes_oval_points() {
    let dir = tempfile::tempdir().unwrap();
    let input =
        r#"{"n": 2, "quadrics": [[[1,0,0],[0,0,0],[0,0,0]], [[0,0,0],[0,1,0],[0,0,0]], [[0,0,0],[0,0,0],[0,0,1]]]}"#;
    let (code, stderr, out) = job(
        dir.path(),
        "diag",
        input,
        "trace",
        &["--depth", "4", "--epsilon", "0.8"],
    );
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(out.join("ovals.csv")).unwrap();
    let report = json(&out.join("report.json"));
    let p: Vec<Vec<f64>> = report["analysis"]["perturbation"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
        .collect();
    let ids: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 3);
    for line in csv.lines().skip(1) {
        let xs: Vec<f64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert!((xs.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
        // det(diag(ω) − 0.8 P) = 0 up to the chord error of a depth-4 mesh
        let m: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| if i == j { xs[i] } else { 0.0 } - 0.8 * p[i][j])
                    .collect()
            })
            .collect();
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        assert!(det.abs() < 1e-2, "{line} {det}");
    }
    assert_eq!(report["analysis"]["epsilon_source"], "override");
    assert_eq!(report["analysis"]["epsilon_used"].as_f64(), Some(0.8));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = r#"{"n": 3, "quadrics": [[[-2,-3,1,-1],[-3,-1,0,3],[1,0,1,-2],[-1,3,-2,-2]], [[-3,-1,3,-1],[-1,-2,2,-1],[3,2,0,-3],[-1,-1,-3,0]], [[0,3,0,-2],[3,3,3,2],[0,3,-3,-3],[-2,2,-3,-1]]]}"#;
    let (_, _, a) = job(
        dir.path(),
        "a",
        input,
        "verify",
        &["--depth", "4", "--seed", "9", "--oracle-res", "6"],
    );
    let (_, _, b) = job(
        dir.path(),
        "b",
        input,
        "verify",
        &["--depth", "4", "--seed", "9", "--oracle-res", "6"],
    );
    for name in ["report.json", "verdict.json", "sample.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn floats_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, out) = job(dir.path(), "zero", ZERO, "analyze", &["--depth", "3"]);
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let line = text.lines().find(|l| l.contains("\"epsilon_used\"")).unwrap();
    let value = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = value.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{value}");
}

#[test]
fn unreadable_input_exits_one_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.json");
    let (code, stderr) = triquad(&[
        "trace",
        "--input",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let err: Value = serde_json::from_str(&stderr).unwrap();
    assert_eq!(err["error"]["code"], "io_error");
    assert_eq!(json(&out.join("error.json")), err);
}

#[test]
fn two_forms_rejected_for_trace_but_analyzed() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr, _) = job(dir.path(), "two", TWO_FORMS, "trace", &[]);
    assert_eq!(code, 1);
    assert!(stderr.contains("unsupported_k"), "{stderr}");
    let (code, stderr, out) = job(dir.path(), "two", TWO_FORMS, "analyze", &[]);
    assert_eq!(code, 0, "{stderr}");
    let report = json(&out.join("report.json"));
    assert_eq!(report["inertia"]["k"], 1);
    // ±diag(1, 1, −1) has two and one positive directions
    assert_eq!(report["inertia"]["mu"], 2);
    assert_eq!(report["inertia"]["nu"], 1);
}

#[test]
fn asymmetric_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = r#"{"n": 1, "quadrics": [[[1,2],[0,1]], [[1,0],[0,1]], [[1,0],[0,1]]]}"#;
    let (code, stderr, _) = job(dir.path(), "asym", input, "analyze", &[]);
    assert_eq!(code, 1);
    assert!(stderr.contains("asymmetric_matrix"), "{stderr}");
}

#[test]
fn bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr, _) = job(dir.path(), "zero", ZERO, "trace", &["--depth", "11"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("invalid_parameter"), "{stderr}");
    let (code, _, _) = job(dir.path(), "zero", ZERO, "trace", &["--epsilon=-0.5"]);
    assert_eq!(code, 1);
    let (code, stderr) = triquad(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("invalid_arguments"), "{stderr}");
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("self");
    let (code, stderr) = triquad(&["selftest", "--depth", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let cases = json(&out.join("selftest.json"));
    assert!(cases.as_array().unwrap().iter().all(|c| c["passed"] == true), "{cases}");
}
