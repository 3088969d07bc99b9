use std::fs;

use fracwick::experiment::*;
use fracwick::Error;
use serde_json::{json, Value};

fn default_json() -> Value {
    serde_json::to_value(ExperimentConfig::default_run()).unwrap()
}

fn field_error(v: Value) -> String {
    match ExperimentConfig::from_json(&v.to_string()) {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn shipped_default_matches_builtin() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json")).unwrap();
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg.hash(), ExperimentConfig::default_run().hash());
}

#[test]
fn errors_name_the_field() {
    let cases: Vec<(&str, Box<dyn Fn(&mut Value)>)> = vec![
        ("problem.hurst", Box::new(|v| v["problem"]["hurst"] = json!(0.5))),
        ("problem.hurst", Box::new(|v| v["problem"]["hurst"] = json!(1.0))),
        ("schema_version", Box::new(|v| v["schema_version"] = json!(2))),
        ("problem.c", Box::new(|v| v["problem"]["c"] = json!([1.0, 2.0]))),
        ("discretization.steps", Box::new(|v| v["discretization"]["steps"] = json!(12))),
        ("discretization.k_ladder", Box::new(|v| v["discretization"]["k_ladder"] = json!([1, 4, 2, 16]))),
        ("discretization.k_ladder", Box::new(|v| v["discretization"]["k_ladder"] = json!([1, 2, 4, 8]))),
        ("sampling.n", Box::new(|v| v["sampling"]["n"] = json!(10))),
        ("sampling.workers", Box::new(|v| v["sampling"]["workers"] = json!(0))),
        ("analyses.bound.exponents[1] (p1/p2)", Box::new(|v| v["analyses"]["bound"]["exponents"][1] = json!([2.0, 3.0, 3.0]))),
        ("analyses.fokker_planck.test_functions", Box::new(|v| v["analyses"]["fokker_planck"]["test_functions"] = json!(["nope"]))),
    ];
    for (want, mutate) in cases {
        let mut v = default_json();
        mutate(&mut v);
        let field = field_error(v);
        assert!(field.starts_with(want), "{want}: got `{field}`");
    }
}

#[test]
fn unknown_keys_rejected() {
    let mut v = default_json();
    v["discretization"]["stepz"] = json!(4);
    let msg = ExperimentConfig::from_json(&v.to_string()).unwrap_err().to_string();
    assert!(msg.contains("stepz"), "{msg}");
}

#[test]
fn hash_ignores_workers_only() {
    let base = ExperimentConfig::default_run();
    let mut w = base.clone();
    w.sampling.workers = 8;
    assert_eq!(base.hash(), w.hash());
    let mut s = base.clone();
    s.sampling.seed += 1;
    assert_ne!(base.hash(), s.hash());
    let mut h = base.clone();
    h.problem.hurst = 0.71;
    assert_ne!(base.hash(), h.hash());
}

// the only test in this binary that touches the environment
#[test]
fn seed_precedence() {
    let cfg = ExperimentConfig::default_run();
    std::env::remove_var(SEED_ENV);
    assert_eq!(effective_seed(&cfg, None).unwrap(), 42);
    std::env::set_var(SEED_ENV, "7");
    assert_eq!(effective_seed(&cfg, None).unwrap(), 7);
    assert_eq!(effective_seed(&cfg, Some(3)).unwrap(), 3);
    std::env::set_var(SEED_ENV, "x");
    assert!(effective_seed(&cfg, None).is_err());
    std::env::remove_var(SEED_ENV);
}

fn small_run() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_run();
    cfg.discretization.basis_cells = 32;
    cfg.discretization.steps = 4;
    cfg.discretization.k_ladder = vec![1, 2, 4];
    cfg.sampling.n = 2_000;
    cfg.analyses.bound.as_mut().unwrap().k = vec![1, 2];
    cfg.analyses.bound.as_mut().unwrap().n = Some(5_000);
    cfg.analyses.fokker_planck = None;
    cfg
}

#[test]
fn run_writes_manifest_and_tagged_csvs() {
    let cfg = small_run();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&cfg, dir.path(), None, Some(42)).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], json!(cfg.hash()));
    assert_eq!(manifest["files"], json!(["convergence.csv", "gronwall.csv", "bound.csv"]));
    for f in ["convergence.csv", "gronwall.csv", "bound.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash={}", cfg.hash()));
    }
    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = conv.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "K,l1_error,std_err,n,sigma_defect_phi");
    assert_eq!(lines.count(), 3);
    assert!(outcome.gates.iter().any(|g| g.name == "convergence.exact_projection" && g.pass));
}

#[test]
fn workers_do_not_change_output() {
    let cfg = small_run();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&cfg, a.path(), Some(1), Some(5)).unwrap();
    run(&cfg, b.path(), Some(3), Some(5)).unwrap();
    for f in ["convergence.csv", "gronwall.csv", "bound.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn selftest_all_pass() {
    for case in selftest() {
        assert!(case.outcome.is_ok(), "{}: {:?}", case.name, case.outcome);
    }
}

#[test]
fn default_convergence_matches_fixture() {
    let mut cfg = ExperimentConfig::default_run();
    cfg.analyses.gronwall = false;
    cfg.analyses.bound = None;
    cfg.analyses.fokker_planck = None;
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, dir.path(), None, None).unwrap();
    let got = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let want = include_str!("fixtures/default_convergence.csv");
    let rows = |s: &str| -> Vec<Vec<f64>> {
        s.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('K'))
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect()
    };
    let (got, want) = (rows(&got), rows(want));
    assert_eq!(got.len(), 5);
    for (g, w) in got.iter().zip(&want) {
        for (a, b) in g.iter().zip(w) {
            assert!((a - b).abs() <= 1e-9 * b.abs() + 1e-14, "{g:?} vs {w:?}");
        }
    }
}
