use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use morrey_ns::grid::make_grid;
use morrey_ns::io::{read_field, write_field};
use morrey_ns::norms::scaling_exponent;
use morrey_ns::{Field, Representation};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morrey-ns"))
}

fn run(dir: &Path, sub: &str, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join(format!("{sub}.json"));
    std::fs::write(&path, config.to_string()).unwrap();
    bin()
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn space() -> Value {
    json!({"q": [2.0, 3.0], "lambda": [0.5, 0.25], "r": 1.0, "regularity": -0.5, "flavor": "physical-besov"})
}

fn write_fixture(dir: &Path, name: &str, f: &Field) -> PathBuf {
    let p = dir.join(name);
    write_field(&p, f).unwrap();
    p
}

#[test]
fn norm_of_zero_field_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(2, 16, 2.0 * PI).unwrap();
    let f = write_fixture(dir.path(), "zero.anf", &Field::zeros(g, Representation::Physical));
    let o = run(dir.path(), "norm", &json!({"norm": {"fields": [f], "space": space()}}), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_lines(&o)[0]["value"], json!(0.0));
}

#[test]
fn indicator_exponent_fit() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(2, 128, 2.0 * PI).unwrap();
    let radii = [8.0 * g.spacing(), 32.0 * g.spacing()];
    let files: Vec<PathBuf> = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let f = Field::from_fn(g, |x| {
                let d2: f64 = (0..2)
                    .map(|a| {
                        let y = x[a].rem_euclid(2.0 * PI);
                        y.min(2.0 * PI - y).powi(2)
                    })
                    .sum();
                if d2.sqrt() <= r {
                    1.0
                } else {
                    0.0
                }
            });
            write_fixture(dir.path(), &format!("ball{k}.anf"), &f)
        })
        .collect();
    let cfg = json!({"norm": {"fields": files, "space": space(), "kind": "morrey", "radii": radii}});
    let o = run(dir.path(), "norm", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    let fit = lines.last().unwrap()["exponent_fit"].as_f64().unwrap();
    let expected = scaling_exponent(&[2.0, 3.0], &[0.5, 0.25]);
    assert!((fit - expected).abs() <= 0.05, "{fit} vs {expected}");
}

#[test]
fn malformed_and_invalid_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.anf");
    let o = run(dir.path(), "norm", &json!({"norm": {"fields": [missing], "space": space()}}), &[]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());

    let garbage = dir.path().join("garbage.anf");
    std::fs::write(&garbage, b"not a field").unwrap();
    let o = run(dir.path(), "norm", &json!({"norm": {"fields": [garbage], "space": space()}}), &[]);
    assert_eq!(code(&o), 2);

    let bad_config = dir.path().join("bad.json");
    std::fs::write(&bad_config, "{ nope").unwrap();
    let o = bin().arg("norm").arg("--config").arg(&bad_config).output().unwrap();
    assert_eq!(code(&o), 2);

    let g = make_grid(2, 16, 2.0 * PI).unwrap();
    let f = write_fixture(dir.path(), "zero.anf", &Field::zeros(g, Representation::Physical));
    let mut bad = space();
    bad["lambda"] = json!([1.5, 0.25]);
    let o = run(dir.path(), "norm", &json!({"norm": {"fields": [f], "space": bad}}), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn decompose_writes_blocks_that_add_up() {
    let dir = tempfile::tempdir().unwrap();
    let g = make_grid(2, 32, 2.0 * PI).unwrap();
    let f = Field::from_fn(g, |x| (x[0]).sin() * (2.0 * x[1]).cos() + (5.0 * x[0] + 3.0 * x[1]).cos());
    let path = write_fixture(dir.path(), "f.anf", &f);
    let o = run(dir.path(), "decompose", &json!({"decompose": {"field": path}}), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = &stdout_lines(&o)[0];
    let mut total = read_field(Path::new(summary["low"]["file"].as_str().unwrap())).unwrap();
    for b in summary["blocks"].as_array().unwrap() {
        let block = read_field(Path::new(b["file"].as_str().unwrap())).unwrap();
        total = total.lin_comb(1.0, &block, 1.0).unwrap();
    }
    let err = total.lin_comb(1.0, &f.to_spectral(), -1.0).unwrap().max_abs();
    assert!(err < 1e-12, "{err}");
    assert!(dir.path().join("out/decomposition.json").exists());
}

fn solve_config(data: Value, k: Option<f64>) -> Value {
    let params = space();
    let mut s = json!({
        "nu": 1.0, "T": 1.0, "M": 16, "max_picard": 20, "tol": 1e-10,
        "params": params, "data": data,
    });
    if let Some(k) = k {
        s["K_estimate"] = json!(k);
    }
    json!({"grid": {"dim": 2, "n": 16}, "solve": s})
}

#[test]
fn solve_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "solve", &solve_config(json!({"kind": "zero"}), Some(0.05)), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_lines(&o)[0]["iterations"], json!(1));
    let out = dir.path().join("out");
    for f in ["trajectory.anf", "trajectory.anf.json", "report.json", "block_norms.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["status"], json!("converged"));
    assert!(report["note"].as_str().unwrap().contains("truncated"));
}

#[test]
fn taylor_green_block_norms_decay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "solve", &solve_config(json!({"kind": "taylor-green", "amplitude": 1.0}), Some(0.05)), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/block_norms.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 17);
    let first = &rows[0];
    let mut checked = 0;
    for row in &rows {
        let decay = (-2.0 * row[0]).exp();
        for k in 1..row.len() {
            if first[k] > 1e-12 {
                assert!((row[k] / first[k] - decay).abs() <= 1e-4 * decay, "t={} scale column {k}", row[0]);
                checked += 1;
            }
        }
    }
    assert!(checked >= 17);
}

#[test]
fn oversized_data_are_rejected_when_required() {
    let dir = tempfile::tempdir().unwrap();
    let data = json!({"kind": "anisotropic", "eps": 1e3, "variant": "product"});
    let o = run(dir.path(), "solve", &solve_config(data, Some(0.05)), &["--require-admissible"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not small"));
}

#[test]
fn divergence_exits_four_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = json!({"kind": "anisotropic", "eps": 1e4, "variant": "product"});
    let o = run(dir.path(), "solve", &solve_config(data, Some(0.05)), &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/report.json").exists());
}

fn verify_config(checks: &[&str], extra: Value) -> Value {
    let mut v = json!({"checks": checks, "samples": 4});
    for (k, val) in extra.as_object().unwrap() {
        v[k] = val.clone();
    }
    json!({"grid": {"dim": 2, "n": 16}, "verify": v})
}

#[test]
fn verify_r_monotonicity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "verify", &verify_config(&["r-monotonicity"], json!({})), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<Value> = std::fs::read_to_string(dir.path().join("out/verify.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for l in lines.iter().filter(|l| l["control"] == json!(false)) {
        assert!(l["fitted_C"].as_f64().unwrap() <= 1.0 + 1e-9);
        assert_eq!(l["verdict"], json!("pass"));
        for key in ["id", "params", "spread", "seed"] {
            assert!(l.get(key).is_some());
        }
    }
}

#[test]
fn controls_only_run_passes_when_controls_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = verify_config(&["holder-lebesgue", "young", "r-monotonicity"], json!({"controls_only": true}));
    let o = run(dir.path(), "verify", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    assert!(!lines.is_empty());
    for l in &lines {
        assert_eq!(l["control"], json!(true));
        assert_eq!(l["verdict"], json!("fail"));
    }
}

#[test]
fn failing_check_exits_five_and_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = verify_config(&["bernstein-physical"], json!({"spread_ceiling": 1.0001}));
    let o = run(dir.path(), "verify", &cfg, &[]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bernstein-physical"));
}

#[test]
fn unknown_check_is_a_parameter_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "verify", &verify_config(&["no-such-check"], json!({})), &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cfg = verify_config(&["bernstein-physical", "holder-lebesgue"], json!({}));
    let read = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(dir.path(), "verify", &cfg, &["--seed", seed, "--jobs", "1"]);
        assert!(code(&o) == 0 || code(&o) == 5);
        std::fs::read(dir.path().join("out/verify.jsonl")).unwrap()
    };
    assert_eq!(read("3"), read("3"));
    assert_ne!(read("3"), read("4"));
}
