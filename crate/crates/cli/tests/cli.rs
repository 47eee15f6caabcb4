use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrl")).args(args).output().expect("qrl runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const CONFIG: &str = r#"{
  "family": "simon",
  "variant": "M2_rg",
  "sizes": [4, 5, 6],
  "trials": 6,
  "agents": ["a3", "collision_seeker"],
  "budget": { "kind": "exp2", "coeff": 64.0, "rate": 0.5, "offset": 1000 },
  "master_seed": 9,
  "permute_labels": true
}"#;

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_reports_a_certified_secret() {
    let out = qrl(&["run", "--family", "simon", "--variant", "M2_rg", "--n", "5", "--agent", "a3", "--budget", "3000", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["total_steps"], 3000);
    assert!(v["total_reward"].as_u64().unwrap() > 0);
    assert_eq!(v["solve"]["success"], true);

    let gen = json(&qrl(&["gen", "--family", "simon", "--n", "5", "--seed", "4"]));
    assert_eq!(v["solve"]["secret"], gen["instance"]["s"]);
}

#[test]
fn run_is_reproducible_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = dir.path().join("a.jsonl");
    let t2 = dir.path().join("b.jsonl");
    let args = |t: &Path| {
        let t = t.to_str().unwrap().to_string();
        vec!["run", "--family", "rfs", "--variant", "RFS_M3_rg", "--n", "2", "--l", "2", "--agent", "a3", "--budget", "400", "--seed", "1", "--trace"]
            .into_iter()
            .map(String::from)
            .chain([t])
            .collect::<Vec<_>>()
    };
    let a = Command::new(env!("CARGO_BIN_EXE_qrl")).args(args(&t1)).output().unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_qrl")).args(args(&t2)).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());
    assert_eq!(fs::read_to_string(&t1).unwrap().lines().filter(|l| l.contains("oracle_call")).count(), 4);
}

#[test]
fn invalid_configurations_exit_with_2() {
    let cases: [&[&str]; 5] = [
        &["run", "--family", "simon", "--variant", "M1", "--n", "4", "--agent", "a3", "--budget", "100"],
        &["run", "--family", "simon", "--variant", "M2_rg", "--n", "40", "--agent", "random", "--budget", "100"],
        &["run", "--family", "rfs", "--variant", "RFS_M2", "--n", "2", "--agent", "a2", "--budget", "100"],
        &["run", "--family", "simon", "--variant", "M1", "--n", "4", "--agent", "random", "--budget", "0"],
        &["run", "--family", "simon", "--variant", "nope", "--n", "4", "--agent", "random", "--budget", "5"],
    ];
    for args in cases {
        assert_eq!(qrl(args).status.code(), Some(2), "{args:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"family": "simon", "variant": "M1", "sizes": [4], "trials": 1, "agents": ["a3"], "budget": {"kind": "fixed", "steps": 9}, "master_seed": 0}"#);
    assert_eq!(qrl(&["bench", "--config", &bad]).status.code(), Some(2));
    let garbage = write_config(dir.path(), "{ not json");
    assert_eq!(qrl(&["bench", "--config", &garbage]).status.code(), Some(2));
}

#[test]
fn bench_twice_gives_identical_summaries_and_report_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = qrl(&["bench", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let summary = fs::read(a.join("summary.csv")).unwrap();
    assert_eq!(summary, fs::read(b.join("summary.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&summary).lines().count(), 7);

    let r = dir.path().join("r");
    let out = qrl(&["report", "--dir", a.to_str().unwrap(), "--out", r.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["summary.csv", "solver.csv", "fits.csv", "README.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(r.join(f)).unwrap(), "{f}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("fit a3 poly_in_n"));
}

#[test]
fn verify_passes_and_gen_round_trips() {
    let out = qrl(&["verify", "--suite", "solvers", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));

    let g = json(&qrl(&["gen", "--family", "rfs", "--variant", "RFS_M3_rg", "--n", "2", "--l", "2", "--seed", "7"]));
    assert_eq!(g["env"]["variant"], "RFS_M3_rg");
    assert_eq!(g["instance"]["kind"], "rfs");
    assert_eq!(qrl(&["report", "--dir", "/nonexistent/qrl"]).status.code(), Some(1));
}
