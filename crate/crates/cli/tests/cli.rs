use std::path::{Path, PathBuf};
use std::process::Command;

use specradius_cli::commands::{COMPARE_HEADER, PLOT_HEADER, RADIUS_HEADER, RATES_HEADER, SIMULATE_HEADER};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn specradius(args: &[&str]) -> Run {
    let o = Command::new(env!("CARGO_BIN_EXE_specradius"))
        .args(args)
        .env_remove("SPECRADIUS_OUT")
        .env_remove("SPECRADIUS_THREADS")
        .output()
        .unwrap();
    Run {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    specradius(&args)
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "preset = \"ord-mild-sd\"\n[scenario]\nk_max = 4096\n[experiment]\nn = 200\ntests = [\"indirect\"]\nkinds = [\"indirect\"]\n",
    );
    let out = dir.path().join("o");
    for cmd in ["radius", "simulate", "rates"] {
        let r = run_cmd(cmd, &cfg, &out, &[]);
        assert_eq!(r.code, 0, "{cmd}: {}", r.stderr);
    }
    assert_eq!(RADIUS_HEADER, "scenario,flavor,component,rho2,rho,k_star,variance_at_k,bias_at_k,truncation_binding");
    assert_eq!(SIMULATE_HEADER, "scenario,test,alpha,k_or_K,N,seed,type1,type1_se,alt_id,type2,type2_se");
    assert_eq!(first_line(&out.join("radius.csv")), RADIUS_HEADER);
    assert_eq!(first_line(&out.join("simulate.csv")), SIMULATE_HEADER);
    assert_eq!(first_line(&out.join("rates.csv")), RATES_HEADER);
    assert_eq!(first_line(&out.join("rates_plot.csv")), PLOT_HEADER);
    assert_eq!(first_line(&out.join("rates_compare.csv")), COMPARE_HEADER);
    for col in ["fitted_slope", "slope_se", "target_exponent", "table_source", "pass"] {
        assert!(RATES_HEADER.split(',').any(|c| c == col));
    }
}

fn combined(rows: &[csv::StringRecord], flavor: &str) -> csv::StringRecord {
    rows.iter().find(|r| &r[1] == flavor && &r[2] == "combined").unwrap().clone()
}

#[test]
fn zero_noise_radius_is_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[scenario]\neps = 0.0\nsigma = 0.0\nk_max = 1000\n");
    let out = dir.path().join("o");
    let r = run_cmd("radius", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&out.join("radius.csv"));
    for flavor in ["indirect", "direct"] {
        let row = combined(&rows, flavor);
        assert_eq!(row[3].parse::<f64>().unwrap(), 1e-6);
        assert_eq!(&row[5], "1000");
        assert_eq!(&row[8], "true");
    }
}

#[test]
fn known_operator_radius() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[scenario]\ns = 1.0\np = 1.0\neps = 0.1\nsigma = 0.0\nk_max = 1000\n");
    let out = dir.path().join("o");
    assert_eq!(run_cmd("radius", &cfg, &out, &[]).code, 0);
    let row = combined(&csv_rows(&out.join("radius.csv")), "indirect");
    assert!((row[3].parse::<f64>().unwrap() - 0.111111).abs() < 1e-6);
    assert_eq!(&row[5], "3");
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "preset = \"ord-mild-sd\"\n[experiment]\nn = = 3\n");
    let r = run_cmd("radius", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
}

#[test]
fn unknown_preset_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "# experiment\npreset = \"ord-wild-sd\"\n");
    let r = run_cmd("radius", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2") && r.stderr.contains("ord-wild-sd"), "{}", r.stderr);
}

#[test]
fn short_grid_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[experiment]\ngrid = [0.1, 0.01, 0.001]\n");
    let r = run_cmd("rates", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("grid too short"), "{}", r.stderr);
}

#[test]
fn underflowing_operator_is_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "preset = \"ord-severe-sd\"\n[scenario]\nk_max = 5000\n");
    let r = run_cmd("radius", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("operator numerically zero"), "{}", r.stderr);
}

#[test]
fn severe_preset_uses_iterated_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "preset = \"ord-severe-sd\"\n[experiment]\nkinds = [\"indirect\"]\n");
    let out = dir.path().join("o");
    let r = run_cmd("rates", &cfg, &out, &[]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    let rows = csv_rows(&out.join("rates.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], "loglog");
    assert_eq!(rows[0][7].parse::<f64>().unwrap(), -1.0);
    assert_eq!(&rows[0][10], "true");
}

#[test]
fn mild_preset_rate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "preset = \"ord-mild-sd\"\n[experiment]\nkinds = [\"indirect\"]\n");
    let out = dir.path().join("o");
    assert_eq!(run_cmd("rates", &cfg, &out, &[]).code, 0);
    let rows = csv_rows(&out.join("rates.csv"));
    assert!((rows[0][7].parse::<f64>().unwrap() - 0.4444).abs() < 1e-4);
    assert_eq!(&rows[0][10], "true");
}

#[test]
fn print_defaults_is_a_valid_config() {
    let r = specradius(&["config", "print-defaults"]);
    assert_eq!(r.code, 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.toml", &r.stdout);
    assert_eq!(run_cmd("radius", &cfg, &dir.path().join("o"), &[]).code, 0);
}

const SMALL: &str = "preset = \"ord-mild-gof\"\n[scenario]\nk_max = 4096\n[experiment]\nn = 200\ntests = [\"indirect\", \"indirect-max\"]\n[manifest]\ncommands = [\"radius\", \"simulate\"]\n";

#[test]
fn manifest_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run_cmd("manifest", &cfg, &a, &[]).code, 0);
    assert_eq!(run_cmd("manifest", &cfg, &b, &["--threads", "3"]).code, 0);
    assert_eq!(run_cmd("manifest", &cfg, &c, &["--seed", "7"]).code, 0);
    let read = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let r = run_cmd("manifest", &cfg, &dir.path().join("v"), &["--verify"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.stdout.matches("identical").count(), 2);
}

#[test]
fn tampered_output_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("o");
    assert_eq!(run_cmd("manifest", &cfg, &out, &[]).code, 0);
    let m = out.join("manifest.json");
    let ok = run_cmd("manifest", &cfg, &out, &["--check", m.to_str().unwrap()]);
    assert_eq!(ok.code, 0, "{}", ok.stdout);
    let csv = out.join("simulate.csv");
    let text = std::fs::read_to_string(&csv).unwrap().replace(",42,", ",43,");
    std::fs::write(&csv, text).unwrap();
    let bad = run_cmd("manifest", &cfg, &out, &["--check", m.to_str().unwrap()]);
    assert_eq!(bad.code, 1);
    assert!(bad.stdout.contains("hash mismatch: simulate.csv"), "{}", bad.stdout);
}

#[test]
fn bounds_check_dumps_failing_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[scenario]\nk_max = 4096\n[bounds]\nconfigs = 3\ndraws = 2000\nchi2_draws = 200000\nlemma_checks = 50\ngrids = [\"exp\"]\n",
    );
    let r = run_cmd("bounds-check", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.lines().all(|l| l.starts_with("check=") || l.starts_with("failing_config") || l.starts_with("summary")));
    assert!(r.stdout.contains("failing_config check=adaptive_grid_exp_small"), "{}", r.stdout);
    let ok = write_config(
        dir.path(),
        "ok.toml",
        "[scenario]\nk_max = 4096\n[bounds]\nconfigs = 3\ndraws = 2000\nchi2_draws = 200000\nlemma_checks = 50\ngrids = [\"poly\"]\n",
    );
    let r = run_cmd("bounds-check", &ok, &dir.path().join("o"), &[]);
    assert_eq!(r.code, 0, "{}", r.stdout);
}
