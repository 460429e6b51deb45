mod common;

use std::time::Duration;

use common::*;
use gicoord_core::search::OptimalPlan;
use gicoord_core::store::{load_scenario, load_trace, ScenarioDocument};
use gicoord_service::Session;

#[test]
fn fixtures_are_current() {
    for (name, doc) in fixture_sources() {
        let p = fixture(name);
        let want = fixture_bytes(&doc);
        if blessing() {
            std::fs::write(&p, &want).unwrap();
        }
        let have = std::fs::read(&p).unwrap();
        assert_eq!(String::from_utf8_lossy(&have), String::from_utf8_lossy(&want), "{name}");
        assert_eq!(load_scenario(&have).unwrap(), load_scenario(&want).unwrap());
    }
}

#[test]
fn validate_good() {
    let (o, bytes) = to_file(&["validate", path(&fixture("good"))]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    golden("validate_good.json", &bytes).unwrap();
}

#[test]
fn search_two_agent() {
    let (o, bytes) = to_file(&["search", "--budget", "100000", path(&fixture("two_agent"))]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let plan: OptimalPlan = serde_json::from_slice(&bytes).unwrap();
    assert!(plan.proven_optimal);
    golden("search_two_agent.json", &bytes).unwrap();
}

#[test]
fn simulate_chain_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("chain.trace");
    let o = gicoord(&["simulate", "--quiescence", path(&fixture("chain")), "--out", path(&trace)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let bytes = std::fs::read(&trace).unwrap();
    let doc = load_trace(&bytes).unwrap();
    assert!(doc.replans >= 1);
    golden("simulate_chain.json", &bytes).unwrap();

    let (o, report) = to_file(&["replay", path(&fixture("chain")), path(&trace)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    golden("replay_chain.json", &report).unwrap();
}

#[test]
fn other_subcommands() {
    let good = fixture("good");
    for (name, args) in [
        ("plan_good.json", vec!["plan", path(&good)]),
        ("schedule_good.json", vec!["schedule", path(&good)]),
        ("allocate_good.json", vec!["allocate", "--speed", "1.5", path(&good)]),
        ("simulate_good_until.json", vec!["simulate", "--until", "300", path(&good)]),
    ] {
        let (o, bytes) = to_file(&args);
        assert_eq!(o.code, 0, "{name}: {}", o.stderr);
        golden(name, &bytes).unwrap();
    }
}

#[test]
fn stdout_matches_out_file() {
    let good = fixture("good");
    let o = gicoord(&["plan", path(&good)]);
    let (_, bytes) = to_file(&["plan", path(&good)]);
    assert_eq!(o.code, 0);
    assert_eq!(o.stdout, bytes);
}

fn write_doc(dir: &std::path::Path, name: &str, doc: &ScenarioDocument) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, fixture_bytes(doc)).unwrap();
    p
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let mut bad = fixture_sources().remove(1).1;
    bad.strategies[0].threads[0].min_agents = 3;
    bad.strategies[0].threads[0].max_agents = 1;
    let bad = write_doc(tmp.path(), "bad.scn", &bad);
    let o = gicoord(&["validate", path(&bad)]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("min_agents"), "{}", o.stderr);

    let garbage = tmp.path().join("garbage.scn");
    std::fs::write(&garbage, b"{\"format_version\": 1, \"world\": 7}").unwrap();
    let o = gicoord(&["validate", path(&garbage)]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("world"), "{}", o.stderr);

    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(fixture("good")).unwrap()).unwrap();
    v["format_version"] = 2.into();
    let future = tmp.path().join("future.scn");
    std::fs::write(&future, v.to_string()).unwrap();
    let o = gicoord(&["validate", path(&future)]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("format_version"), "{}", o.stderr);

    // Two agents cannot staff two threads that each need two.
    let mut tight = fixture_sources().remove(1).1;
    for t in &mut tight.strategies[0].threads {
        t.min_agents = 2;
        t.max_agents = 2;
    }
    let tight = write_doc(tmp.path(), "tight.scn", &tight);
    assert_eq!(gicoord(&["validate", path(&tight)]).code, 0);
    let o = gicoord(&["search", path(&tight)]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert_eq!(gicoord(&["plan", path(&tight)]).code, 2);

    assert_eq!(gicoord(&["simulate", path(&fixture("chain"))]).code, 3);
    assert_eq!(gicoord(&["--help"]).code, 0);

    let missing = tmp.path().join("missing.scn");
    assert_eq!(gicoord(&["validate", path(&missing)]).code, 3);
    assert_eq!(gicoord(&["allocate", "--speed", "0", path(&fixture("good"))]).code, 3);
    assert_eq!(gicoord(&["schedule", "--decision", "a1>T1", path(&fixture("good"))]).code, 1);
    assert_eq!(gicoord(&["schedule", "--decision", "a1=T1", path(&fixture("good"))]).code, 1);

    let trace = tmp.path().join("t.trace");
    assert_eq!(gicoord(&["simulate", "--quiescence", path(&fixture("chain")), "-o", path(&trace)]).code, 0);
    let o = gicoord(&["replay", path(&fixture("two_agent")), path(&trace)]);
    assert_eq!(o.code, 3, "{}", o.stderr);
}

#[test]
fn server_mode_agrees_with_local() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let empty = ScenarioDocument::new(Default::default(), Vec::new());
    rt.spawn(gicoord_service::serve_on(listener, Session::new(empty)));
    std::thread::sleep(Duration::from_millis(50));

    let two = fixture("two_agent");
    for args in [vec!["search", path(&two)], vec!["plan", path(&two)], vec!["schedule", path(&two)]] {
        let (lo, local) = to_file(&args);
        let mut remote_args = vec!["--server", url.as_str()];
        remote_args.extend(&args);
        let (ro, remote) = to_file(&remote_args);
        assert_eq!((lo.code, ro.code), (0, 0), "{:?}: {} {}", args, lo.stderr, ro.stderr);
        assert_eq!(String::from_utf8_lossy(&local), String::from_utf8_lossy(&remote), "{args:?}");
    }

    let chain = fixture("chain");
    let (_, local) = to_file(&["simulate", "--quiescence", path(&chain)]);
    let (ro, remote) = to_file(&["--server", &url, "simulate", "--quiescence", path(&chain)]);
    assert_eq!(ro.code, 0, "{}", ro.stderr);
    assert_eq!(local, remote);

    // Without a scenario the session carries on from where it is.
    let o = gicoord(&["--server", &url, "allocate", "--speed", "2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
}
