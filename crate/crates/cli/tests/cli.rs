use std::path::{Path, PathBuf};
use std::process::Command;

use dtdd_ffr_cli::{content_hash, run_from};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json")
}

fn tiny_sim() -> Vec<String> {
    ["realizations=2", "half_side=150", "slots_per_realization=200"]
        .iter()
        .flat_map(|s| ["--set".to_string(), s.to_string()])
        .collect()
}

fn run(args: &[&str], extra: &[String]) -> Result<Vec<PathBuf>, dtdd_ffr_cli::CliError> {
    let mut argv: Vec<String> = vec!["dtdd-ffr".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".into(), config().display().to_string()]);
    argv.extend(extra.iter().cloned());
    run_from(argv)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn analytic_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let written = run(&["analytic", "--out", out], &[]).unwrap();
    assert!(names(&written).contains(&"analytic.csv.meta.json".to_string()));
    let (header, rows) = read_csv(&dir.path().join("analytic.csv"));
    assert_eq!(header[0], "direction");
    assert_eq!(rows.len(), 2);
    let bytes = std::fs::read(dir.path().join("analytic.csv")).unwrap();
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("analytic.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["content_hash"], content_hash(&bytes));
    assert_eq!(meta["config"]["scenario"]["edge_subbands"], 1);
    assert_eq!(meta["command"], "analytic");
}

#[test]
fn analytic_and_simulate_do_not_collide() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let a = names(&run(&["analytic", "--out", out], &[]).unwrap());
    let s = names(&run(&["simulate", "--out", out, "--seed", "3"], &tiny_sim()).unwrap());
    assert!(a.iter().all(|f| !s.contains(f)));
    let (header, rows) = read_csv(&dir.path().join("metrics.csv"));
    assert_eq!(header[0], "realization");
    assert_eq!(rows.len(), 2);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("metrics.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 3);
    assert_eq!(meta["config"]["sim"]["realizations"], 2);
}

#[test]
fn figure2_grids_match() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["figure", "--id", "2", "--scale", "desk", "--out", out], &tiny_sim()).unwrap();
    let (ha, a) = read_csv(&dir.path().join("fig2_analytic.csv"));
    let (hs, s) = read_csv(&dir.path().join("fig2_sim.csv"));
    assert_eq!(&ha[..2], &["L", "t_db"]);
    assert_eq!(&hs[..2], &["L", "t_db"]);
    assert_eq!(a.len(), 26);
    let key = |rows: &[Vec<String>]| rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&s));
    assert_eq!(a[0][1], "-4");
    assert_eq!(a[12][1], "8");
}

#[test]
fn figure3_has_every_l() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["figure", "--id", "3", "--out", out], &tiny_sim()).unwrap();
    let (_, a) = read_csv(&dir.path().join("fig3_analytic.csv"));
    for l in ["1", "3", "5", "7"] {
        assert_eq!(a.iter().filter(|r| r[0] == l).count(), 64);
    }
    let (h, s) = read_csv(&dir.path().join("fig3_sim.csv"));
    assert_eq!(h, ["L", "r_bin_center_m", "mpt_dl", "mpt_ul", "count"]);
    assert_eq!(s.len(), 4 * 14);
}

#[test]
fn figure4_reports_analytic_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["figure", "--id", "4", "--scale", "desk", "--out", out], &[]).unwrap();
    let (_, sweep) = read_csv(&dir.path().join("fig4_sweep.csv"));
    assert_eq!(sweep.len(), 24);
    let (h, summary) = read_csv(&dir.path().join("fig4_summary.csv"));
    assert_eq!(&h[..4], &["objective", "feasible", "L", "theta_db"]);
    for row in &summary {
        assert_eq!(row[1], "true");
        assert_eq!((row[2].as_str(), row[3].as_str()), ("5", "1"), "{}", row[0]);
    }
}

#[test]
fn compare_carries_clustered_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["compare", "--out", out], &[]).unwrap();
    let (h, rows) = read_csv(&dir.path().join("compare.csv"));
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[col("clustered_dl")], "0.456");
        assert_eq!(r[col("clustered_ul")], "0.159");
    }
    assert_eq!(rows[1][0], "no_ffr");
}

#[test]
fn infeasible_sweep_exits_one_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_dtdd-ffr"))
        .args(["optimize", "--config"])
        .arg(config())
        .arg("--out")
        .arg(&out)
        .args(["--set", "min_mpt_dl=10", "--set", "min_mpt_ul=10"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn usage_errors_exit_two() {
    let bin = env!("CARGO_BIN_EXE_dtdd-ffr");
    let code = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(config())
            .status()
            .unwrap()
            .code()
    };
    assert_eq!(code(&["figure", "--id", "9"]), Some(2));
    assert_eq!(code(&["figure"]), Some(2));
    assert_eq!(code(&["analytic", "--set", "scenario.missing=1"]), Some(2));
    assert_eq!(code(&["analytic", "--set", "edge_subbands=10"]), Some(2));
}
