use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mobil(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobil")).args(args).env("MOBIL_OUT_DIR", out_dir).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == ext)).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn stdout_path(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

#[test]
fn single_round_run_writes_one_row_and_meta() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "rounds=1\n");
    let out_dir = tmp.path().join("out");
    let out = mobil(&out_dir, &["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout_path(&out);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,w_n,loss,grad_norm,pred_err_sq,model_loss,pi_gap,avg_weighted_regret,J_estimate");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,1,"));
    let stem = csv.file_stem().unwrap().to_str().unwrap();
    assert_eq!(stem.len(), 16);
    let meta = fs::read_to_string(out_dir.join(format!("{stem}.meta"))).unwrap();
    assert!(meta.contains("rounds=1\n"));
    assert!(meta.contains("algorithm=mobil_prox\n"));
    assert!(meta.contains(&format!("version={}", env!("CARGO_PKG_VERSION"))));
    assert!(meta.contains("output_index=1"));
}

#[test]
fn same_config_gives_byte_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "rounds=25\nnoiseless=false\nseed=3\nmodel_oracle=learned\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let pa = stdout_path(&mobil(&a, &["run", cfg.to_str().unwrap()]));
    let pb = stdout_path(&mobil(&b, &["run", cfg.to_str().unwrap()]));
    assert_eq!(pa.file_name(), pb.file_name());
    assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
    let reordered = write_config(tmp.path(), "d.txt", "model_oracle=learned\nseed=3\n# same run\nnoiseless=false\nrounds=25\n");
    let pc = stdout_path(&mobil(&tmp.path().join("c"), &["run", reordered.to_str().unwrap()]));
    assert_eq!(pa.file_name(), pc.file_name());
}

#[test]
fn bad_config_exits_one_and_lists_every_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "rounds=0\nbogus.key=1\nstep.beta=2\n");
    let out_dir = tmp.path().join("out");
    let out = mobil(&out_dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["rounds", "bogus.key", "step.beta"] {
        assert!(err.contains(key), "{err}");
    }
    assert!(files_with_ext(&out_dir, "csv").is_empty());
}

#[test]
fn failed_run_leaves_no_files() {
    let tmp = TempDir::new().unwrap();
    // Valid config whose open-loop dynamics explode.
    let cfg = write_config(tmp.path(), "c.txt", "rounds=5\nenv.spectral_radius=50\nenv.horizon=40\n");
    let out_dir = tmp.path().join("out");
    let out = mobil(&out_dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(files_with_ext(&out_dir, "csv").is_empty() && files_with_ext(&out_dir, "meta").is_empty());
}

#[test]
fn mirror_prox_adds_columns_and_svg() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "algorithm=mirror_prox\nvi.problem=bilinear\nrounds=20\noutput.svg=true\n");
    let out = mobil(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout_path(&out);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",J_estimate,err_gap,gamma_n"));
    assert_eq!(text.lines().count(), 21);
    let svg = fs::read_to_string(csv.with_extension("svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn sweep_runs_the_product() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.txt", "rounds=8\n");
    let out_dir = tmp.path().join("out");
    let out = mobil(&out_dir, &["sweep", cfg.to_str().unwrap(), "--vary", "p=0,2", "--vary", "model_oracle=exact,none,last_cost"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
    assert_eq!(files_with_ext(&out_dir, "csv").len(), 6);
    assert_eq!(files_with_ext(&out_dir, "meta").len(), 6);

    let bad = mobil(&out_dir, &["sweep", cfg.to_str().unwrap(), "--vary", "p=1,oops"]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = mobil(&out_dir, &["sweep", cfg.to_str().unwrap(), "--vary", "nokey"]);
    assert_eq!(bad.status.code(), Some(1));
}

fn synthetic_csv(dir: &Path, f: impl Fn(f64) -> f64) -> PathBuf {
    let mut text = String::from("n,value\n");
    for n in 1..=2048 {
        text.push_str(&format!("{n},{}\n", f(n as f64)));
    }
    write_config(dir, "s.csv", &text)
}

fn fitted_slope(dir: &Path, csv: &Path, nmin: &str, nmax: &str) -> f64 {
    fitted_column(dir, csv, "value", nmin, nmax)
}

fn fitted_column(dir: &Path, csv: &Path, column: &str, nmin: &str, nmax: &str) -> f64 {
    let out = mobil(dir, &["fit", csv.to_str().unwrap(), "--column", column, "--nmin", nmin, "--nmax", nmax]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["slope"].as_f64().unwrap()
}

#[test]
fn fit_synthetic_columns() {
    let tmp = TempDir::new().unwrap();
    let s = fitted_slope(tmp.path(), &synthetic_csv(tmp.path(), |n| 3.0 / (n * n)), "64", "2048");
    assert!((s + 2.0).abs() <= 0.01, "{s}");
    // The local slope of ln N / N is 1/ln N − 1, so any fit on [64, 2048] lies between its end values.
    let s = fitted_slope(tmp.path(), &synthetic_csv(tmp.path(), |n| 0.5 * n.ln() / n), "64", "2048");
    let (steep, flat) = (1.0 / 2048f64.ln() - 1.0, 1.0 / 64f64.ln() - 1.0);
    assert!(s > steep && s < flat, "{s}");
    let s = fitted_slope(tmp.path(), &synthetic_csv(tmp.path(), |_| 4.2), "1", "2048");
    assert!(s.abs() <= 0.01, "{s}");
}

#[test]
fn fit_rejects_bad_input() {
    let tmp = TempDir::new().unwrap();
    let csv = synthetic_csv(tmp.path(), |n| if (n as usize).is_multiple_of(100) { 0.0 } else { 1.0 / n });
    let out = mobil(tmp.path(), &["fit", csv.to_str().unwrap(), "--column", "value", "--nmin", "1", "--nmax", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("10 non-positive"));
    let out = mobil(tmp.path(), &["fit", csv.to_str().unwrap(), "--column", "missing"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_reads_run_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "rounds=64\n");
    let csv = stdout_path(&mobil(tmp.path(), &["run", cfg.to_str().unwrap()]));
    let s = fitted_column(tmp.path(), &csv, "avg_weighted_regret", "8", "64");
    assert!(s < 0.0, "{s}");
}

#[test]
fn verify_reports_and_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = mobil(tmp.path(), &["verify", "poly_sums"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["suite"], "poly_sums");
    assert_eq!(v["passed"], true);
    assert_eq!(v["failures"], 0);

    let out = mobil(tmp.path(), &["verify", "ftl_lemmas"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((v["total"].as_u64(), v["failures"].as_u64()), (Some(100), Some(0)));

    assert_eq!(mobil(tmp.path(), &["verify", "no_such_suite"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(mobil(tmp.path(), &[]).status.code(), Some(1));
    assert_eq!(mobil(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(mobil(tmp.path(), &["run", "/nonexistent/config.txt"]).status.code(), Some(1));
    assert_eq!(mobil(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn default_benchmark_run_is_quick() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", "algorithm=mobil_prox\nmodel_oracle=exact\np=2\nrounds=512\n");
    let start = std::time::Instant::now();
    let out = mobil(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(start.elapsed().as_secs_f64() < 30.0);
}
