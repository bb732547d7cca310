use std::path::Path;
use std::process::{Command, Output};

fn dag_ma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dag-ma")).args(args).output().unwrap()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn version_prints_the_package_version() {
    let out = dag_ma(&["version"]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        format!("dag-ma {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(dag_ma(&[]).status.code(), Some(1));
    assert_eq!(dag_ma(&["simulate", "--lambda", "bic"]).status.code(), Some(1));
    assert_eq!(dag_ma(&["simulate", "--n", "2", "--reps", "1"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir.path().join("bad.csv"), "a,b\n1,2\n3,x\n");
    let out = dag_ma(&["fit", "--data", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let constant = write(&dir.path().join("c.csv"), "a,b\n1,5\n2,5\n3,5\n4,5\n5,5\n");
    assert_eq!(dag_ma(&["fit", "--data", &constant, "--standardize"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    // two strongly dependent columns: the only legal edge is taken at once,
    // so the forward phase has nothing left to add
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("a,b\n");
    for i in 0..40 {
        let a = (i as f64 * 0.7).sin() * 3.0;
        text.push_str(&format!("{a},{}\n", 2.0 * a + 0.01 * (i as f64 * 1.3).cos()));
    }
    let path = write(&dir.path().join("pair.csv"), &text);
    let out = dag_ma(&["fit", "--data", &path, "--candidates", "3"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_csv_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = dag_ma(&[
        "simulate", "--p", "5", "--rho", "0.5", "--n", "40,80", "--reps", "2", "--candidates", "3", "--baselines",
        "oracle_true_graph", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "p,rho,n,rep,method,kl,pe,ee_a,ee_omega,w_underfit,w_smallest_correct,w_overfit,seconds"
    );
    let methods: Vec<&str> = lines.map(|l| l.split(',').nth(4).unwrap()).collect();
    assert!(methods.iter().all(|m| *m == "dag_ma" || *m == "oracle_true_graph"));
    for metric in ["kl", "pe", "ee_a", "ee_omega"] {
        let svg = std::fs::read_to_string(out_dir.join(format!("{metric}_p5_rho0.5.svg"))).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}

#[test]
fn consistency_records_only_the_averaged_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cons");
    let out = dag_ma(&[
        "consistency", "--p", "6", "--rho", "0.6", "--n", "100", "--reps", "2", "--candidates", "3", "--plant-true",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(4) == Some("dag_ma")));
}

#[test]
fn fit_writes_dot_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lbs_synthetic.csv");
    let dot = dir.path().join("g.dot");
    let weights = dir.path().join("w.csv");
    let out = dag_ma(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--candidates",
        "5",
        "--lambda",
        "mallows2",
        "--out-dot",
        dot.to_str().unwrap(),
        "--out-weights",
        weights.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("lambda (mallows2) = 2"));
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph dag {\n  \"AT\";"));
    let w = std::fs::read_to_string(&weights).unwrap();
    assert_eq!(w.lines().count(), 6);
    let total: f64 = w.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-12);
}
