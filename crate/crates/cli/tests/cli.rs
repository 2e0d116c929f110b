use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_RATES: &str = r#"
seed = 4

[schedule]
alpha = 1.0
d = 1

[plan]
n = [32, 48, 64, 96]
reps = 10
s = 20
grid = 64

[truth]
kind = "cosine-series"
k = 20
amplitude = 3.0
seed = 1
"#;

fn rgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_rates(cfg: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["rates", "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    rgp(&args)
}

#[test]
fn rough_smoothness_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL_RATES.replace("alpha = 1.0", "alpha = 0.4"));
    let out = run_rates(&cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("α > d/2"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL_RATES.replace("reps = 10", "reps = 10\nrepetitions = 3"));
    assert_eq!(run_rates(&cfg, &dir.path().join("o"), &[]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(run_rates(missing.to_str().unwrap(), &dir.path().join("o"), &[]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_RATES);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run_rates(&cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run_rates(&cfg, &b, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run_rates(&cfg, &c, &["--seed", "5"]).status.code(), Some(0));
    for f in ["rates.csv", "fit.csv", "medians.csv", "rates.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ra = fs::read_to_string(a.join("rates.csv")).unwrap();
    let rc = fs::read_to_string(c.join("rates.csv")).unwrap();
    assert_ne!(ra, rc);
    let stamp = ra.lines().next().unwrap();
    assert!(stamp.starts_with("# schema_version=1 config_sha256="));
    assert!(stamp.ends_with(" seed=4"));
    assert!(rc.lines().next().unwrap().ends_with(" seed=5"));
    assert!(ra.contains("n,rep,seed,a_n,eps_n_nolog,l1_postmean,l1_postmedian,contraction_fraction,wall_ms"));
}

#[test]
fn dry_run_computes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_RATES);
    let out = run_rates(&cfg, &dir.path().join("o"), &["--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("a_n=") && text.contains("cells=40"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn failed_check_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_RATES}\n[check]\nslope_target = 3.0\nslope_tol = 0.1\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = run_rates(&cfg, &dir.path().join("o"), &["--check"]);
    assert_eq!(out.status.code(), Some(4));
    // artifacts are still written
    assert!(dir.path().join("o/fit.csv").exists());
    // without --check the same run succeeds
    assert_eq!(run_rates(&cfg, &dir.path().join("p"), &[]).status.code(), Some(0));
}

#[test]
fn kernel_and_rkhs_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let k = write_config(dir.path(), "k.toml", "[kernel]\nprofile = \"trapezoid\"\n");
    let out = rgp(&["kernel-check", "--config", &k, "--out", dir.path().join("k").to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = fs::read_to_string(dir.path().join("k/certificate.csv")).unwrap();
    assert!(cert.contains("profile,trapezoid"));
    let r = write_config(dir.path(), "r.toml", "seed = 2\n[rkhs]\na = [4.0]\nd = [1]\nelements = 20\n");
    let out = rgp(&["rkhs-check", "--config", &r, "--out", dir.path().join("r").to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = fs::read_to_string(dir.path().join("r/l2_bound.csv")).unwrap();
    assert_eq!(rows.lines().count(), 22);
}

#[test]
fn simulate_writes_data_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_RATES.replace("[plan]", "[simulate]\nn = 50\ngrid = 20\n\n[unused_plan]");
    let text = text.split("[unused_plan]").next().unwrap().to_string() + "[truth]\nkind = \"analytic\"\n";
    let cfg = write_config(dir.path(), "s.toml", &text);
    let out = rgp(&["simulate", "--config", &cfg, "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let data = fs::read_to_string(dir.path().join("s/data.csv")).unwrap();
    assert_eq!(data.lines().count(), 52);
    let post = fs::read_to_string(dir.path().join("s/posterior.csv")).unwrap();
    assert_eq!(post.lines().count(), 22);
}
