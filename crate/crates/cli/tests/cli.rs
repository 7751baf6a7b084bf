use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_assort-knap"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_then_solve_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--n", "5", "--m", "2", "--k", "2", "--t", "256", "--seed", "4", "--out", "inst.json"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let text = fs::read_to_string(dir.path().join("inst.json")).unwrap();
    assert!(text.contains("\"cardinality_cap\""));

    let o = run(&["solve-fluid", "--instance", "inst.json"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    let gap: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("phi_psi_discrepancy: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap <= 1e-6);

    let o = run(&["simulate", "--instance", "inst.json", "--policy", "resolving", "--seed", "9", "--trace", "trace.csv"], dir.path());
    assert!(o.status.success());
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["policy"], "resolving");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "tau,t_tau,s_tau,m_tau,beta_tau,delta_tau,gamma_tau_1,gamma_tau_2"
    );
    assert!(trace.lines().count() > 1);

    // same seed, same summary
    let again = run(&["simulate", "--instance", "inst.json", "--policy", "resolving", "--seed", "9"], dir.path());
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["gen", "--n", "4", "--m", "3", "--k", "2", "--t", "64", "--seed", "1"], dir.path());
    let b = run(&["gen", "--n", "4", "--m", "3", "--k", "2", "--t", "64", "--seed", "1"], dir.path());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["gen", "--n", "4", "--m", "3", "--k", "2", "--t", "64", "--seed", "2"], dir.path());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn decompose_prints_one_based_supports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["decompose", "--x", "0.5,0.5", "--k", "1"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("0.5 {1}"));
    assert!(out.contains("0.5 {2}"));

    let bad = run(&["decompose", "--x", "0.9,0.9", "--k", "1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn experiment_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"n_products":4,"n_resources":2,"cardinality_cap":2,"horizons":[16,32],"n_trials":2,"master_seed":3}"#;
    fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let o = run(&["experiment", "--config", "cfg.json", "--jobs", "2", "--out", "res"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("res/rows.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "policy,N,M,K,T,trial,seed,revenue,fluid_value,regret,epochs_completed,status"
    );
    assert_eq!(lines.count(), 3 * 2 * 2);
    let summary = fs::read_to_string(dir.path().join("res/summary.dat")).unwrap();
    assert!(summary.contains("# policy=resolving N=4 M=2 K=2"));

    let o = run(&["experiment", "--config", "cfg.json", "--jobs", "1", "--out", "res1"], dir.path());
    assert!(o.status.success());
    assert_eq!(csv, fs::read_to_string(dir.path().join("res1/rows.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"n_products":4,"extra":1}"#).unwrap();
    let o = run(&["experiment", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["experiment", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["experiment", "--profile", "huge"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
