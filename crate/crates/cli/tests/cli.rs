use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modalshift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.in.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY: &str = r#"{
    "solver": "oracle",
    "gen": { "n_requests": 2, "n_stations": 2, "n_vehicles": 2 },
    "families": [
        { "geography": "Intercity", "allocation": "Different", "tw_class": "Wide",
          "n_requests": 2, "n_stations": 2, "n_vehicles": 2 }
    ],
    "sensitivity": { "sweep": "frequency", "values": [1, 10] },
    "pareto": { "subsidy_grid": [0.0, 0.5, 1.0], "budget_ratios": [0.0, 0.5] },
    "verify": { "random_sets": 20, "trials": 50 }
}"#;

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["nonsense"])), 1);
    assert_eq!(code(&run(&["gen", "--scenarios", "0"])), 1);
    assert_eq!(code(&run(&["compare", "--budget", "-1"])), 1);
    assert_eq!(code(&run(&["compare", "--subsidy", "1.5"])), 1);
    assert_eq!(code(&run(&["gen", "--config", "/nonexistent/config.json"])), 1);
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(&["gen", "--seed", "7", "--scenarios", "3", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(a.join("instances"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for name in names {
        let x = fs::read(a.join("instances").join(&name)).unwrap();
        let y = fs::read(b.join("instances").join(&name)).unwrap();
        assert_eq!(x, y, "{name:?}");
    }
    assert_eq!(
        fs::read(a.join("seeds.csv")).unwrap(),
        fs::read(b.join("seeds.csv")).unwrap()
    );
    assert!(a.join("config.json").exists());
}

#[test]
fn oracle_compare_and_infeasible_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    let o = run(&[
        "compare",
        "--config",
        &cfg,
        "--scenarios",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");

    let o = run(&[
        "compare",
        "--config",
        &cfg,
        "--scenarios",
        "2",
        "--budget",
        "1e9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sensitivity_and_pareto_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = run(&["sensitivity", "--config", &cfg, "--scenarios", "2", "--out", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("sensitivity_frequency.csv").exists());
    let o = run(&["pareto", "--config", &cfg, "--scenarios", "2", "--out", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("frontier.csv").exists());
    assert!(out.join("omitted.csv").exists());
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let good = tmp.path().join("good");
    let o = run(&["verify", "--config", &cfg, "--out", good.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violations=0"));
    assert!(!good.join("counterexample.json").exists());

    let bad = tmp.path().join("bad");
    let o = run(&[
        "verify",
        "--config",
        &cfg,
        "--subsidy",
        "0.9",
        "--out",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(bad.join("counterexample.json").exists());
}

#[test]
fn berlin_on_a_pool_file() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = modalshift::ingest::synthetic_pool(40, 30.0, 5);
    let pool_path = tmp.path().join("pool.txt");
    fs::write(&pool_path, pool.to_text()).unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "alns": { "max_iterations": 50 },
             "berlin": { "tariffs": [2.0, 4.0],
                         "case": { "n_requests": 4, "n_vehicles": 3 } } }"#,
    );
    let out = tmp.path().join("out");
    let o = run(&[
        "berlin",
        "--config",
        &cfg,
        "--pool",
        pool_path.to_str().unwrap(),
        "--scenarios",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("berlin.csv")).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");

    let o = run(&["berlin", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    fs::write(&pool_path, "not a pool\n").unwrap();
    let o = run(&[
        "berlin",
        "--pool",
        pool_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}
