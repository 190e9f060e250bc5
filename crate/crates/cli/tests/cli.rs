use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vmono_cli::output::SCHEMA;

const SMALL: [&str; 6] = [
    "--surfaces",
    "round_sphere,flat_disk",
    "--theorems",
    "sobolev_constant,isoperimetric,monotonicity_m",
    "--resolutions",
    "8,12",
];

fn vmono(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmono")).args(args).output().expect("spawn vmono")
}

fn run_into(dir: &Path, format: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--format", format, "--out", out];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    vmono(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn identical_runs_give_identical_json() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_into(a.path(), "json", &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run_into(b.path(), "json", &[]).status.code(), Some(0));
    let ja = fs::read(a.path().join("reports.json")).unwrap();
    let jb = fs::read(b.path().join("reports.json")).unwrap();
    assert!(!ja.is_empty());
    assert_eq!(ja, jb);
}

#[test]
fn json_is_schema_valid_with_seventeen_digit_floats() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), "json", &[]);
    let text = fs::read_to_string(dir.path().join("reports.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    for line in text.lines().filter(|l| l.trim_start().starts_with("\"margin\"")) {
        let v = line.split(": ").nth(1).unwrap().trim_end_matches(',');
        if v != "null" {
            let mantissa = v.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.len(), 18, "{v}");
        }
    }
}

#[test]
fn csv_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), "csv", &[]).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["surface", "theorem", "resolution", "verdict", "lhs", "rhs", "margin", "tol", "failed_hypotheses"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 3 * 2);
    // ordered by surface (as requested), theorem, resolution
    let keys: Vec<(String, String, String)> = rows.iter().map(|r| (r[0].into(), r[1].into(), r[2].into())).collect();
    assert_eq!(keys[0], ("round_sphere".into(), "monotonicity_m".into(), "8".into()));
    assert_eq!(keys[1].2, "12");
    assert_eq!(keys[11].0, "flat_disk");
    assert!(dir.path().join("reports.json").exists());
}

#[test]
fn table_uses_scientific_notation_and_a_tol_column() {
    let mut args = vec!["run", "--format", "table"];
    args.extend_from_slice(&SMALL);
    let o = vmono(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["surface", "theorem", "n", "verdict", "lhs", "rhs", "margin", "tol"]);
    lines.next();
    let mut numbers = 0;
    for line in lines {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells.len(), 8, "{line}");
        for c in &cells[4..] {
            if *c != "-" {
                let (mant, exp) = c.split_once('e').unwrap_or_else(|| panic!("not scientific: {c}"));
                assert_eq!(mant.trim_start_matches('-').len(), 5, "{c}");
                exp.parse::<i32>().unwrap();
                numbers += 1;
            }
        }
    }
    assert!(numbers > 0);
}

#[test]
fn report_rerenders_a_saved_bundle() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(a.path(), "json", &[]);
    run_into(b.path(), "csv", &[]);
    let o = vmono(&["report", "--in", a.path().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), fs::read_to_string(b.path().join("reports.csv")).unwrap());
    let json = vmono(&["report", "--in", a.path().to_str().unwrap(), "--format", "json"]);
    assert_eq!(stdout(&json), fs::read_to_string(a.path().join("reports.json")).unwrap());
}

#[test]
fn violation_exits_one() {
    // a negative margin well inside its tolerance, turned into a violation by shrinking the tolerance
    let args = ["run", "--surfaces", "flat_disk", "--theorems", "monotonicity_pos_open", "--resolutions", "12"];
    let holds = vmono(&args);
    assert_eq!(holds.status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.extend_from_slice(&["--tol-scale", "1e-6", "--format", "csv"]);
    let o = vmono(&strict);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violated-within-tolerance"));
}

#[test]
fn hypothesis_failure_exits_zero() {
    let o = vmono(&[
        "run",
        "--surfaces",
        "round_sphere",
        "--theorems",
        "asymptotic_bound",
        "--resolutions",
        "8",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("hypothesis-failed"), "{text}");
    assert!(text.contains("support inside B_rho(p)"), "{text}");
}

#[test]
fn usage_and_io_errors_exit_two() {
    let cases: [&[&str]; 6] = [
        &["run", "--surfaces", "no_such_surface"],
        &["run", "--surfaces", "round_sphere", "--resolutions", "16,8"],
        &["run", "--theorems", "fermat"],
        &["run", "--surfaces", "round_sphere", "--tol-scale", "0"],
        &["report", "--in", "/nonexistent/vmono"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = vmono(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let file = tempfile::NamedTempFile::new().unwrap();
    let inside = file.path().join("sub");
    let o = vmono(&[
        "run",
        "--surfaces",
        "round_sphere",
        "--theorems",
        "isoperimetric",
        "--resolutions",
        "8",
        "--out",
        inside.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_surface_error_lists_the_catalog() {
    let o = vmono(&["run", "--surfaces", "no_such_surface"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("round_sphere") && err.contains("clifford_torus"), "{err}");
}

#[test]
fn catalog_list_names_every_surface() {
    let o = vmono(&["catalog", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in vmono::catalog::Catalog::bundled().names() {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

#[test]
fn custom_catalog_file_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cat.toml");
    fs::write(
        &path,
        r#"
[[surface]]
name = "half_sphere_radius"
kind = "round_sphere"
b = 0.0
radii = [0.5]
point = [1.5707963267948966, 0.0]
known.area = { value = 3.141592653589793, provenance = "4 pi R^2" }
"#,
    )
    .unwrap();
    let o = vmono(&[
        "run",
        "--catalog",
        path.to_str().unwrap(),
        "--theorems",
        "isoperimetric",
        "--resolutions",
        "8",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("half_sphere_radius,isoperimetric,8,holds"));
}
