use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn viscofem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscofem")).args(args).output().expect("binary runs")
}

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config/default.toml")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn verify_passes_on_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = viscofem(&["verify", "--config", default_config().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
    assert_eq!(header(&out.join("verify.csv")), "suite,passed,value,threshold");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(viscofem(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(viscofem(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(viscofem(&[]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nper_unit = 4\ncells = 3\n");
    let o = viscofem(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cells"));
}

#[test]
fn invalid_values_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "[adapt]\nfraction = 0.0\n",
        "[estimator]\nrepresentation = 4\n",
        "[kernel]\ntype = \"prony\"\ngamma = [1.5]\nlambda = [1.0]\n",
        "[problem]\nname = \"nope\"\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let o = viscofem(&["estimate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn estimate_writes_schemas_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nper_unit = 4\n[time]\nslabs = 4\n");
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = viscofem(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for file in ["theta_totals.csv", "theta_cells.csv", "upsilon.csv", "estimate_summary.csv"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert!(x == y, "{file} differs between runs");
    }
    assert_eq!(header(&a.join("theta_totals.csv")), "representation,theta0,theta1,theta2,theta3,theta4,theta5,total");
    assert_eq!(header(&a.join("theta_cells.csv")), "slab,cell,theta0,theta1,theta2,theta3,theta4,theta5,total");
    assert_eq!(header(&a.join("upsilon.csv")), "slab,name,kind,value");
    assert_eq!(header(&a.join("estimate_summary.csv")), "key,value");
}

#[test]
fn solve_and_convergence_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nper_unit = 4\n[time]\nslabs = 4\n");
    let out = dir.path().join("s");
    let o = viscofem(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for file in ["solution.ckp", "solution_final.vtk", "solve_summary.csv"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let o = viscofem(&["convergence", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,h,k,dofs,error,order"));
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    let order: f64 = last[5].parse().unwrap();
    assert!(order > 1.8, "{order}");
}

#[test]
fn adapt_exit_reflects_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let loose = write_config(dir.path(), "[mesh]\nper_unit = 4\n[time]\nslabs = 4\n[adapt]\ntolerance = 1.0\n");
    let out = dir.path().join("a");
    let o = viscofem(&["adapt", "--config", loose.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("adapt_history.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("iteration,dofs_space,dofs_time,dofs_total,estimate,true_error"));
    assert_eq!(text.lines().count(), 2);

    let tight = write_config(dir.path(), "[mesh]\nper_unit = 4\n[time]\nslabs = 4\n[adapt]\ntolerance = 1e-12\nmax_iterations = 1\n");
    let o = viscofem(&["adapt", "--config", tight.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(out.join("adapt_history.csv")).unwrap().lines().count(), 3);
}
