use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use fif_cli::config::SeedSpec;
use fif_cli::export::{read_samples, save_samples};
use fif_core::{GridPartition, Lattice, SampledFunction};
use proptest::prelude::*;
use tempfile::TempDir;

const MINIMAL: &str = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4, "base": "corner",
  "solver": {"refine": 16}}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fif(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_fif"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_cfg(cmd: &str, text: &str, extra: &[&str]) -> (Run, TempDir) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", text);
    let out = dir.path().join("out");
    let mut args = vec![cmd, cfg.to_str().unwrap(), "-o", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (fif(&args), dir)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn construct_writes_samples_and_diagnostics() {
    let (run, dir) = run_cfg("construct", MINIMAL, &[]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let rows = csv_rows(&dir.path().join("out/fractal.csv"));
    assert_eq!(rows[0], vec!["x1", "value"]);
    assert_eq!(rows.len(), 1 + 2 * 16 + 1);
    // x = 0.25 sits at row 1 + 8
    let v: f64 = rows[9][1].parse().unwrap();
    assert!((v + 0.0375).abs() < 1e-9, "{v}");
    let diag: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/diagnostics.json")).unwrap(),
    )
    .unwrap();
    assert!(diag["iterations"].as_u64().unwrap() > 1);
    assert_eq!(diag["refinement"].as_u64(), Some(16));
}

#[test]
fn overrides_change_the_lattice() {
    let (run, dir) = run_cfg("construct", MINIMAL, &["--refine", "4", "--tol", "1e-6"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(csv_rows(&dir.path().join("out/fractal.csv")).len(), 1 + 9);
}

#[test]
fn verify_passes_on_minimal_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", MINIMAL);
    let run = fif(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    assert!(run.stdout.contains("all checks passed"));
    assert!(!run.stdout.contains("FAIL"));
}

#[test]
fn verify_with_tampered_base_exits_two() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4,
        "base": {"expr": "x1 + 0.1*x1^3"}, "solver": {"refine": 16}}"#;
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", text);
    let run = fif(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(run.code, 2, "{}{}", run.stdout, run.stderr);
    assert!(run
        .stdout
        .contains("FAIL  base agrees with the seed at the domain corners"));
}

#[test]
fn construct_with_tampered_base_exits_two() {
    let text =
        r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4, "base": {"expr": "x1 + 0.1"}}"#;
    let (run, _dir) = run_cfg("construct", text, &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
}

#[test]
fn study_over_three_scalings() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4,
        "solver": {"refine": 16}, "study": {"alpha": [0.5, 0.25, 0.125]}}"#;
    let (run, dir) = run_cfg("study", text, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = csv_rows(&dir.path().join("out/study.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows[0],
        vec!["index", "scaling_norm", "error", "bound", "iterations"]
    );
    let errors: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2]);
}

#[test]
fn operator_bounds_and_linearity() {
    let text = r#"{"axes": [[0, 0.5, 1], [0, 0.5, 1]], "seed": "x1*x2", "alpha": 0.3,
        "operator": "corner", "solver": {"refine": 8},
        "operator_bounds": {"samples": ["x1^2 + x2"], "pairs": [["x1^2", "x1^3*x2"]], "random": 2,
                            "linearity": {"f": "x1^2", "g": "sin(x2)", "c": 2}}}"#;
    let (run, dir) = run_cfg("operator-bounds", text, &[]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/operator_bounds.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["relative_lipschitz"].as_array().unwrap().len(), 3);
    assert!(report["linearity"]["residual"].as_f64().unwrap() <= 3e-8);
}

#[test]
fn nonadmissible_operator_exits_two() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.3,
        "operator": {"expr": "f + 1", "linear": false, "lipschitz": 1},
        "operator_bounds": {"samples": ["x1"]}}"#;
    let (run, _dir) = run_cfg("operator-bounds", text, &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
}

#[test]
fn invert_round_trip() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.2, "operator": "corner",
        "solver": {"refine": 16}}"#;
    let (run, dir) = run_cfg("invert", text, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("certified bilipschitz"));
    let inv: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/inverse.json")).unwrap(),
    )
    .unwrap();
    assert!(inv["round_trip_error"].as_f64().unwrap() <= 2e-8);
    assert_eq!(
        csv_rows(&dir.path().join("out/recovered.csv")).len(),
        1 + 33
    );
}

#[test]
fn attractor_points() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4, "solver": {"refine": 64},
        "attractor": {"depth": 6}}"#;
    let (run, dir) = run_cfg("attractor", text, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = csv_rows(&dir.path().join("out/attractor.csv"));
    assert_eq!(rows[0], vec!["x1", "value"]);
    assert_eq!(rows.len(), 1 + 3 * 64);
}

#[test]
fn attractor_depth_cap_is_a_usage_error() {
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 0.4,
        "attractor": {"depth": 40, "cap": 1000}}"#;
    let (run, _dir) = run_cfg("attractor", text, &[]);
    assert_eq!(run.code, 1);
}

#[test]
fn config_errors_exit_one() {
    for text in [
        r#"{"axes": [[0, 0.5, 1]], "seed": "x1^2", "alpha": 1.2}"#,
        r#"{"axes": [[0, 0.5, 1]], "seed": {"values": [1, 2]}, "alpha": 0.4}"#,
        r#"{"axes": [[0, 0.5, 1]], "seed": "x1 + * 2", "alpha": 0.4}"#,
        r#"{"axes": [[0, 0.5, 1]], "seed": "x1", "alpha": 0.4, "colour": "red"}"#,
        "not json",
    ] {
        let (run, _dir) = run_cfg("construct", text, &[]);
        assert_eq!(run.code, 1, "{text}: {}", run.stderr);
        assert!(run.stderr.starts_with("error:"), "{}", run.stderr);
    }
    let run = fif(&["construct", "/nonexistent/cfg.json", "-o", "/tmp/x"]);
    assert_eq!(run.code, 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fif(&["frobnicate"]).code, 1);
    assert_eq!(fif(&[]).code, 1);
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", MINIMAL);
    // construct needs -o
    assert_eq!(fif(&["construct", cfg.to_str().unwrap()]).code, 1);
    assert_eq!(fif(&["--help"]).code, 0);
}

#[test]
fn non_convergence_exits_three() {
    let (run, _dir) = run_cfg("construct", MINIMAL, &["--max-iter", "2"]);
    assert_eq!(run.code, 3, "{}", run.stderr);
}

#[test]
fn exported_samples_seed_a_new_run() {
    let (run, dir) = run_cfg("construct", MINIMAL, &["--refine", "8"]);
    assert_eq!(run.code, 0);
    let text = r#"{"axes": [[0, 0.5, 1]], "seed": {"csv": "out/fractal.csv", "refine": 8},
        "alpha": 0.0, "solver": {"refine": 8}}"#;
    let cfg = write_config(dir.path(), "again.json", text);
    let out2 = dir.path().join("out2");
    let run = fif(&[
        "construct",
        cfg.to_str().unwrap(),
        "-o",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    // α = 0 reproduces the seed, which is the exported function itself
    assert_eq!(
        std::fs::read_to_string(dir.path().join("out/fractal.csv")).unwrap(),
        std::fs::read_to_string(out2.join("fractal.csv")).unwrap()
    );
}

fn round_trip(grid: GridPartition, m: usize, values: Vec<f64>) {
    let lattice = Arc::new(Lattice::new(grid.clone(), m).unwrap());
    let s = SampledFunction::from_values(lattice.clone(), values).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.csv");
    save_samples(&path, &s).unwrap();

    let back = read_samples(&path, lattice.clone()).unwrap();
    for (a, b) in s.values().iter().zip(back.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    // through the config's data-mode seed, evaluated at shared points
    let cfg = fif_cli::RunConfig {
        base_dir: dir.path().to_path_buf(),
        ..fif_cli::parse_config(r#"{"axes": [[0, 1, 2]], "seed": "x1", "alpha": 0}"#).unwrap()
    };
    let spec = SeedSpec::Csv(fif_cli::config::CsvSeed {
        csv: "s.csv".into(),
        refine: m,
    });
    let field = cfg.field_of(&spec, &grid).unwrap();
    for p in 0..lattice.len() {
        assert_eq!(
            field.eval(&lattice.point(p)).to_bits(),
            s.values()[p].to_bits()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn export_reingest_is_bit_exact(
        knots in prop::collection::vec(0.01f64..3.0, 2..4),
        second in prop::collection::vec(0.01f64..3.0, 2..3),
        m in 1usize..4,
        scale in -1e6f64..1e6,
    ) {
        let axis = |steps: &[f64]| {
            let mut v = vec![-0.7];
            for s in steps {
                let last = *v.last().unwrap();
                v.push(last + s);
            }
            v
        };
        let grid = GridPartition::from_knots(vec![axis(&knots), axis(&second)]).unwrap();
        let n = Lattice::new(grid.clone(), m).unwrap().len();
        let values = (0..n).map(|i| scale * ((i as f64) * 0.7137).sin() / 3.0).collect();
        round_trip(grid, m, values);
    }
}
