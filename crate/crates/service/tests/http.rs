use std::time::Duration;

use gicoord_api::{code, JobStatus};
use gicoord_client::Client;
use gicoord_core::simulator::{Outcome, SimConfig};
use gicoord_core::store::{load_scenario, save_snapshot, ScenarioDocument};
use gicoord_core::{Event, EventKind, GeoPoint, Strategy, TaskState, WorldState};
use gicoord_service::Session;
use gicoord_testkit as kit;

async fn start(doc: ScenarioDocument) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(gicoord_service::serve_on(listener, Session::new(doc)));
    Client::new(&format!("http://{addr}"))
}

async fn decide_first(c: &Client) -> u64 {
    let v = c.world().await.unwrap().version;
    let choices = c.choices(None).await.unwrap();
    let id = choices.choices.decisions[0].id.clone();
    c.decide(v, &id).await.unwrap().version
}

#[tokio::test(flavor = "multi_thread")]
async fn strategy_then_choices() {
    let (w, s) = kit::hand_traced(false);
    let c = start(ScenarioDocument::new(w, Vec::new())).await;

    let err = c.choices(None).await.unwrap_err();
    assert_eq!(err.code(), Some(code::PRECONDITION));

    let view = c.world().await.unwrap();
    assert_eq!(view.version, 0);
    let ok = c.set_strategy(0, &s).await.unwrap();
    assert_eq!(ok.version, 1);

    let choices = c.choices(None).await.unwrap();
    assert_eq!(choices.version, 1);
    assert_eq!(choices.choices.decisions.len(), 1);
    assert_eq!(choices.choices.decisions[0].assignment["a1"], "T1");
}

#[tokio::test(flavor = "multi_thread")]
async fn stale_version_is_rejected() {
    let (w, s) = kit::hand_traced(false);
    let c = start(kit::scenario(w, s.clone(), "one")).await;
    c.set_strategy(0, &s).await.unwrap();
    let err = c.set_strategy(0, &s).await.unwrap_err();
    assert_eq!(err.code(), Some(code::VERSION_CONFLICT));
    match err {
        gicoord_client::ClientError::Api { status, body } => {
            assert_eq!(status, 409);
            assert_eq!(body.current_version, Some(1));
        }
        other => panic!("{other}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_decisions_linearize() {
    let (w, s) = kit::two_agent();
    let c = start(kit::scenario(w, s, "two")).await;
    let choices = c.choices(None).await.unwrap();
    assert!(choices.choices.decisions.len() >= 2);
    let a = choices.choices.decisions[0].id.clone();
    let b = choices.choices.decisions[1].id.clone();

    let (ra, rb) = tokio::join!(c.decide(0, &a), c.decide(0, &b));
    let wins = [ra.is_ok(), rb.is_ok()].iter().filter(|x| **x).count();
    assert_eq!(wins, 1);
    let winner = if ra.is_ok() { a } else { b };
    let loser = if ra.is_ok() { rb.unwrap_err() } else { ra.unwrap_err() };
    assert_eq!(loser.code(), Some(code::VERSION_CONFLICT));

    let sched = c.schedule().await.unwrap();
    assert_eq!(sched.version, 1);
    assert_eq!(sched.schedule.decision, winner);
}

#[tokio::test(flavor = "multi_thread")]
async fn decision_ids_are_checked() {
    let (w, s) = kit::two_agent();
    let c = start(kit::scenario(w, s, "two")).await;
    let err = c.decide(0, "not an id").await.unwrap_err();
    assert_eq!(err.code(), Some(code::BAD_REQUEST));
    let err = c.decide(0, "a1>T9").await.unwrap_err();
    assert_eq!(err.code(), Some(code::VALIDATION));
    assert_eq!(c.world().await.unwrap().version, 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn run_replans_and_logs() {
    let (w, s) = kit::hand_traced(true);
    let c = start(kit::scenario(w, s, "chain")).await;
    let run = c.run(0, &SimConfig::default()).await.unwrap();
    assert_eq!(run.version, 1);
    assert_eq!(run.outcome, Outcome::Quiescent);
    assert!(run.trace.replans >= 1);

    let events = c.events(0, 0).await.unwrap();
    assert_eq!(events.events.len(), run.trace.events.len());
    assert_eq!(events.next, events.events.len() as u64);
    for (i, e) in events.events.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    let replans = events.events.iter().filter(|e| matches!(e.event.kind, EventKind::ReplanTriggered { .. })).count();
    assert!(replans >= 1);

    let view = c.world().await.unwrap();
    assert!(view.world.macro_tasks.values().all(|t| t.state == TaskState::Done));
    assert_eq!(view.world_digest, run.world_digest);
}

#[tokio::test(flavor = "multi_thread")]
async fn long_poll_wakes_on_new_events() {
    let (w, s) = kit::hand_traced(false);
    let c = start(kit::scenario(w, s, "one")).await;
    let v = decide_first(&c).await;
    let cursor = c.events(0, 0).await.unwrap().next;

    let waiter = {
        let c = c.clone();
        tokio::spawn(async move { c.events(cursor, 10_000).await })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    // The agent reaches the region at 100 s and starts work there.
    let step = c.step(v, 120.0).await.unwrap();
    assert!(!step.events.is_empty());
    let got = tokio::time::timeout(Duration::from_secs(5), waiter).await.unwrap().unwrap().unwrap();
    assert!(!got.events.is_empty());
    assert_eq!(got.events[0].seq, cursor);
    assert_eq!(got.events[0].event, step.events[0]);

    // Nothing new: the wait expires and returns empty.
    let end = cursor + step.events.len() as u64;
    let idle = c.events(end, 50).await.unwrap();
    assert!(idle.events.is_empty());
    assert_eq!(idle.next, end);
}

#[tokio::test(flavor = "multi_thread")]
async fn step_in_pieces() {
    let (w, s) = kit::hand_traced(false);
    let c = start(kit::scenario(w, s, "one")).await;
    let mut v = decide_first(&c).await;
    let first = c.step(v, 120.0).await.unwrap();
    v = first.version;
    let t1 = c.world().await.unwrap().world.macro_tasks["t1"].clone();
    assert_eq!(t1.state, TaskState::InProgress);
    assert!((t1.progress - 0.4).abs() < 1e-6, "{}", t1.progress);
    let rest = c.step(v, 100.0).await.unwrap();
    assert_eq!(rest.outcome, Outcome::Quiescent);
    let world = c.world().await.unwrap().world;
    assert_eq!(world.macro_tasks["t1"].state, TaskState::Done);

    let err = c.step(v, 0.0).await.unwrap_err();
    assert_eq!(err.code(), Some(code::VERSION_CONFLICT));
    let err = c.step(rest.version, 0.0).await.unwrap_err();
    assert_eq!(err.code(), Some(code::BAD_REQUEST));
}

#[tokio::test(flavor = "multi_thread")]
async fn search_then_advice_then_refine() {
    let (w, s) = kit::two_agent();
    let c = start(kit::scenario(w, s, "two")).await;

    let err = c.recommendations().await.unwrap_err();
    assert_eq!(err.code(), Some(code::PRECONDITION));

    let job = c.start_search(None).await.unwrap();
    assert_eq!(job.version, 0);
    let done = c.wait_search(&job.id, Duration::from_millis(20), Duration::from_secs(30)).await.unwrap();
    assert_eq!(done.status, JobStatus::Done);
    let plan = done.plan.unwrap();
    assert!(plan.proven_optimal);

    // Adopt the worst listed choice so there is something to recommend.
    let choices = c.choices(None).await.unwrap();
    let worst = choices.choices.decisions.iter().max_by(|a, b| a.score.total_cmp(&b.score)).unwrap();
    let sched = c.decide(0, &worst.id).await.unwrap();
    assert!(sched.schedule.makespan >= plan.makespan - 1e-6);

    let recs = c.recommendations().await.unwrap();
    assert!((recs.optimal_makespan - plan.makespan).abs() < 1e-6);
    assert!(recs.current_makespan >= recs.optimal_makespan - 1e-6);
    for r in &recs.recommendations {
        assert!(r.predicted_gain >= 0.0);
    }

    let ids: Vec<String> = recs.recommendations.iter().map(|r| r.id.clone()).collect();
    let refined = c.refine(sched.version, &ids).await.unwrap();
    assert_eq!(refined.version, sched.version + 1);
    assert!(!refined.strategy.threads.is_empty());

    let err = c.refine(refined.version, &["nope".to_string()]).await.unwrap_err();
    assert!(err.code() == Some(code::NOT_FOUND) || err.code() == Some(code::PRECONDITION), "{err}");
}

fn wide() -> (WorldState, Strategy) {
    let mut w = WorldState::default();
    for ty in kit::TYPES {
        w.insert_task_type(gicoord_core::TaskType { id: ty.into(), unit_workload: 30.0 });
    }
    let mut threads = Vec::new();
    for r in 0..4 {
        let id = format!("R{r}");
        w.insert_region(kit::square(&id, GeoPoint::new(135.7 + 0.01 * r as f64, 35.0), 0.002));
        for (k, ty) in kit::TYPES.iter().enumerate() {
            w.insert_task(kit::task(&format!("t{r}{k}"), ty, &id, 3 + k as u32));
        }
        let mut t = kit::thread(&format!("T{r}"), r + 1, &kit::TYPES, 0, 4);
        t.goal_regions.insert(id);
        threads.push(t);
    }
    for i in 0..12 {
        let at = GeoPoint::new(135.69 + 0.004 * i as f64, 35.01);
        w.insert_agent(kit::agent(&format!("a{i:02}"), at, 1.0 + (i % 3) as f64, &kit::TYPES));
    }
    (w, Strategy { id: "W".into(), objective: "cover".into(), threads })
}

#[tokio::test(flavor = "multi_thread")]
async fn search_can_be_cancelled() {
    let (w, s) = wide();
    let c = start(kit::scenario(w, s, "wide")).await;
    let job = c.start_search(Some(u64::MAX)).await.unwrap();
    let cancelled = c.cancel_search(&job.id).await.unwrap();
    assert_eq!(cancelled.id, job.id);
    let end = c.wait_search(&job.id, Duration::from_millis(20), Duration::from_secs(60)).await.unwrap();
    match end.status {
        JobStatus::Cancelled => {
            let plan = end.plan.unwrap();
            assert!(!plan.proven_optimal);
        }
        JobStatus::Done => assert!(end.plan.unwrap().proven_optimal),
        other => panic!("unexpected {other:?}"),
    }
    let err = c.search("s999").await.unwrap_err();
    assert_eq!(err.code(), Some(code::NOT_FOUND));
}

#[tokio::test(flavor = "multi_thread")]
async fn inject_disables_and_reveals() {
    let doc = kit::good();
    let c = start(doc).await;
    let v = decide_first(&c).await;

    let e = Event::new(0.0, EventKind::AgentDisabled { agent: "nobody".into() });
    let err = c.inject(v, &e).await.unwrap_err();
    assert_eq!(err.code(), Some(code::VALIDATION));

    let extra = kit::task("t3", "SEARCH", "R2", 1);
    let e = Event::new(10.0, EventKind::TasksRevealed { parent: None, tasks: vec![extra] });
    let r = c.inject(v, &e).await.unwrap();
    assert_eq!(r.version, v + 1);
    let world = c.world().await.unwrap().world;
    assert!(world.macro_tasks.contains_key("t3"));
    assert!((world.time - 10.0).abs() < 1e-9);

    let e = Event::new(5.0, EventKind::AgentDisabled { agent: "a1".into() });
    let err = c.inject(r.version, &e).await.unwrap_err();
    assert_eq!(err.code(), Some(code::BAD_REQUEST));

    let log = c.events(0, 0).await.unwrap();
    let kinds: Vec<&str> = log.events.iter().map(|e| e.event.kind.name()).collect();
    assert!(kinds.contains(&"tasks_revealed"), "{kinds:?}");
    assert_eq!(kinds.last(), Some(&"replan_triggered"));
}

#[tokio::test(flavor = "multi_thread")]
async fn allocation_and_scenario_round_trip() {
    let doc = kit::good();
    let c = start(doc.clone()).await;
    let a = c.allocate(1.5).await.unwrap();
    assert_eq!(a.version, 0);
    let placed: u32 = a.allocation.flows.iter().map(|f| f.persons).sum();
    assert!(placed > 0);
    let log = c.events(0, 0).await.unwrap();
    assert_eq!(log.events.len(), 1);
    assert_eq!(log.events[0].event.kind.name(), "allocation_made");

    let err = c.allocate(0.0).await.unwrap_err();
    assert_eq!(err.code(), Some(code::BAD_REQUEST));

    let got = c.scenario().await.unwrap();
    assert_eq!(save_snapshot(&got), save_snapshot(&load_scenario(&save_snapshot(&doc)).unwrap()));

    let (w, s) = kit::hand_traced(false);
    let other = kit::scenario(w, s, "one");
    let ok = c.load_scenario(0, &other).await.unwrap();
    assert_eq!(ok.version, 1);
    let now = c.world().await.unwrap();
    assert_eq!(now.world.agents.len(), 1);
    // The log survives a reload.
    assert_eq!(c.events(0, 0).await.unwrap().events.len(), 1);

    let mut broken = other.clone();
    broken.format_version = 99;
    let err = c.load_scenario(1, &broken).await.unwrap_err();
    assert_eq!(err.code(), Some(code::BAD_REQUEST));
}

#[tokio::test(flavor = "multi_thread")]
async fn replayed_mutations_reproduce_digests() {
    use gicoord_core::allocation::allocation_violations;
    use gicoord_core::scheduler::feasibility_violations;

    async fn script(c: &Client) -> Vec<gicoord_core::Digest> {
        let doc = kit::good();
        let mut digests = Vec::new();
        let mut v = c.world().await.unwrap().version;
        let strategy = doc.strategies[0].clone();
        let a = c.set_strategy(v, &strategy).await.unwrap();
        digests.push(a.world_digest);
        v = a.version;
        let top = c.choices(None).await.unwrap().choices.decisions[0].id.clone();
        let s = c.decide(v, &top).await.unwrap();
        let world = c.world().await.unwrap().world;
        assert!(feasibility_violations(&world, &strategy, &s.schedule).is_empty());
        digests.push(s.world_digest);
        v = s.version;
        let st = c.step(v, 400.0).await.unwrap();
        digests.push(st.world_digest);
        v = st.version;
        let e = Event::new(
            450.0,
            EventKind::TasksRevealed { parent: None, tasks: vec![kit::task("t9", "RESCUE", "R1", 1)] },
        );
        let i = c.inject(v, &e).await.unwrap();
        let world = c.world().await.unwrap().world;
        assert!(feasibility_violations(&world, &strategy, i.schedule.as_ref().unwrap()).is_empty());
        digests.push(i.world_digest);
        v = i.version;
        let r = c.run(v, &SimConfig::default()).await.unwrap();
        digests.push(r.world_digest);
        assert_eq!(c.world().await.unwrap().world_digest, r.world_digest);
        let alloc = c.allocate(2.0).await.unwrap();
        assert!(allocation_violations(&alloc.allocation, &c.world().await.unwrap().world).is_empty());
        digests
    }

    let first = start(kit::good()).await;
    let second = start(kit::good()).await;
    let a = script(&first).await;
    let b = script(&second).await;
    assert_eq!(a, b);
    let la = first.events(0, 0).await.unwrap();
    let lb = second.events(0, 0).await.unwrap();
    assert_eq!(la.events, lb.events);
}
