use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdi")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn construct_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = bdi(&["construct", "--n", "8", "--seed", "3", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read(a.join("codebook.txt")).unwrap();
    assert_eq!(text, fs::read(b.join("codebook.txt")).unwrap());
    let cb = binomial_di::Codebook::load(&a.join("codebook.txt")).unwrap();
    cb.validate().unwrap();
    assert_eq!(cb.n(), 8);
    assert!(a.join("certificate.json").exists() && a.join("manifest.json").exists());
}

#[test]
fn larger_stop_k_never_shrinks_the_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let mut sizes = Vec::new();
    for k in [1, 10_000] {
        let out = dir.path().join(format!("k{k}"));
        fs::create_dir_all(&out).unwrap();
        let cfg = write_config(&out, &format!(r#"{{"a": 0.05, "stop_k": {k}, "repair_rounds": 0}}"#));
        let o = bdi(&["construct", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        sizes.push(binomial_di::Codebook::load(&out.join("codebook.txt")).unwrap().len());
    }
    assert!(sizes[1] >= sizes[0], "{sizes:?}");
}

#[test]
fn simulate_rows_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), r#"{"a": 0.05, "type1_messages": 5, "type2_pairs": 7, "trials": 2000}"#);
    assert_eq!(code(&bdi(&["construct", "--config", &cfg, "--out", out])), 0);
    assert_eq!(code(&bdi(&["simulate", "--config", &cfg, "--out", out])), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("errors.csv")).unwrap();
    let rows: Vec<binomial_di::experiment::ErrorRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.iter().filter(|r| r.kind == "type2").count(), 7);
    assert_eq!(rows.iter().filter(|r| r.kind == "type1").count(), 5);
    for r in &rows {
        let bound = if r.chebyshev_bound.is_nan() { r.analytic_bound } else { r.analytic_bound.min(r.chebyshev_bound) };
        assert_eq!(r.within_bound, r.estimate <= bound + 3.0 * r.stderr);
    }
    let o = bdi(&["simulate", "--config", &cfg, "--out", out, "--trials", "0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_without_codebook_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bdi(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn bounds_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bdi(&["bounds", "--out", out, "--grid", "1000,10000,100000,1000000", "--b", "0.001"]);
    assert_eq!(code(&o), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("bounds.csv")).unwrap();
    let rows: Vec<binomial_di::experiment::BoundRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!((w[1].rate_lower - 0.25).abs() < (w[0].rate_lower - 0.25).abs());
        assert!((w[1].rate_upper - 1.5).abs() < (w[0].rate_upper - 1.5).abs());
    }
    assert_eq!(code(&bdi(&["bounds", "--out", out, "--grid"])), 1);
}

#[test]
fn verify_flags_corrupted_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), r#"{"a": 0.05, "gamma_pairs": 1000, "converse_instances": 30, "trials": 1000}"#);
    assert_eq!(code(&bdi(&["construct", "--config", &cfg, "--out", out])), 0);
    let o = bdi(&["verify", "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    // duplicate the first codeword: the packing separation is broken
    let path = dir.path().join("codebook.txt");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let first = lines[1];
    lines.push(first);
    let m = lines.len() - 1;
    let header = lines[0].replace(&format!("M={}", m - 1), &format!("M={m}"));
    lines[0] = &header;
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = bdi(&["verify", "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("min-distance"));
}

#[test]
fn usage_and_config_errors() {
    assert_eq!(code(&bdi(&["frobnicate"])), 1);
    assert_eq!(code(&bdi(&["construct", "--seed", "x"])), 1);
    assert_eq!(code(&bdi(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"n\": 4,\n  \"nn\": 5\n}\n");
    let o = bdi(&["construct", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}
