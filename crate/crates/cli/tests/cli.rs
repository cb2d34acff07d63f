use std::path::Path;
use std::process::{Command, Output};

fn ndt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndt")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "models = [\"ba\", \"ws\"]\nsizes = [5]\nseeds = [100]\ntrain_seeds = [0, 1]\niterations = 2\n\n[hyper]\nepochs = 5\n";

#[test]
fn gen_simulate_reroute() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topo.json");
    let out = ndt(&["gen", "--model", "er", "--n", "5", "--seed", "4", "--out", arg(&topo)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gateway paths"));

    let sim = dir.path().join("sim");
    let out = ndt(&["simulate", "--topology", arg(&topo), "--iterations", "2", "--out", arg(&sim)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["events.csv", "transfers.csv", "metrics.csv"] {
        assert!(sim.join(f).exists(), "{f} missing");
    }
    let events = std::fs::read_to_string(sim.join("events.csv")).unwrap();
    assert!(events.starts_with("flow_id,edge_u,edge_v,arrival_t,size_bytes,src_host,dst_host"));

    let out = ndt(&["reroute", "--topology", arg(&topo), "--events", arg(&sim.join("events.csv"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rules installed"));

    // directory form of the telemetry argument, with the rules written out and fed back in
    let rules = dir.path().join("rules.json");
    let out = ndt(&["reroute", "--topology", arg(&topo), "--telemetry", arg(&sim), "--out", arg(&rules)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rules).unwrap()).unwrap();
    assert!(parsed.is_array());
    let again = dir.path().join("again");
    let out = ndt(&["simulate", "--topology", arg(&topo), "--rules", arg(&rules), "--out", arg(&again)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_overrides_and_explicit_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("ws.json");
    let out = ndt(&["gen", "--model", "ws", "--n", "8", "--k", "4", "--p", "0.0", "--out", arg(&topo)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&topo).unwrap()).unwrap();
    assert_eq!(t["params"]["k"], 4);

    // one transfer between hosts on different LANs
    let hosts: Vec<(u64, u64)> = t["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["role"] == "Host")
        .map(|v| (v["id"].as_u64().unwrap(), v["lan"].as_u64().unwrap()))
        .collect();
    let (src, lan) = hosts[0];
    let dst = hosts.iter().find(|h| h.1 != lan).unwrap().0;
    let schedule = serde_json::json!([{
        "id": 0, "src_host": src, "dst_host": dst, "iteration": 0, "size": 50000,
        "state": "Running", "start_t": 0.0
    }]);
    let path = dir.path().join("schedule.json");
    std::fs::write(&path, schedule.to_string()).unwrap();
    let sim = dir.path().join("sim");
    let out = ndt(&["simulate", "--topology", arg(&topo), "--schedule", arg(&path), "--out", arg(&sim)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let transfers = std::fs::read_to_string(sim.join("transfers.csv")).unwrap();
    assert_eq!(transfers.lines().count(), 2);
    assert!(transfers.contains("Completed"));
}

#[test]
fn experiment_both_phases_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let exp = dir.path().join("exp");
    let out = ndt(&["experiment", "--config", arg(&cfg), "--phase", "both", "--out", arg(&exp)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "dataset.jsonl", "baseline/rows.csv", "optimized/rows.csv", "comparison/summary.json"] {
        assert!(exp.join(f).exists(), "{f} missing");
    }
    let delay = std::fs::read_to_string(exp.join("comparison/delay.csv")).unwrap();
    // two models x one size x one seed x two iterations
    assert_eq!(delay.lines().count(), 1 + 4);

    let again = dir.path().join("again");
    let out = ndt(&[
        "compare",
        "--baseline",
        arg(&exp.join("baseline")),
        "--optimized",
        arg(&exp.join("optimized")),
        "--out",
        arg(&again),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(again.join("delay.csv")).unwrap(), delay.as_bytes());

    let model = exp.join("model.json");
    let data = exp.join("dataset.jsonl");
    let out = ndt(&["evaluate", "--model", arg(&model), "--dataset", arg(&data)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("accuracy"));

    let retrained = dir.path().join("m.json");
    let out = ndt(&[
        "train",
        "--data",
        arg(&exp),
        "--holdout",
        "1",
        "--epochs",
        "3",
        "--lr",
        "0.05",
        "--out",
        arg(&retrained),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("validation accuracy"));
    assert!(ndt(&["evaluate", "--model", arg(&retrained), "--data", arg(&exp)]).status.success());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ndt(&["experiment", "--phase", "2", "--out", arg(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run phase 1 first"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeds = []\n").unwrap();
    assert!(!ndt(&["experiment", "--config", arg(&bad), "--out", arg(dir.path())]).status.success());

    // reports whose keys do not line up
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::write(dir.path().join("one.toml"), SMALL).unwrap();
    std::fs::write(dir.path().join("two.toml"), SMALL.replace("seeds = [100]", "seeds = [101]")).unwrap();
    assert!(ndt(&["experiment", "--config", arg(&dir.path().join("one.toml")), "--phase", "1", "--out", arg(&a)])
        .status
        .success());
    assert!(ndt(&["experiment", "--config", arg(&dir.path().join("two.toml")), "--phase", "1", "--out", arg(&b)])
        .status
        .success());
    let out = ndt(&[
        "compare",
        "--baseline",
        arg(&a.join("baseline")),
        "--optimized",
        arg(&b.join("baseline")),
        "--out",
        arg(&dir.path().join("c")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not line up"));
}
