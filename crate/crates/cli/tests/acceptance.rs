//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Uses the library and the `gicoord` binary only;
//! no service is started.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use serde_json::Value;

use common::*;
use gicoord_core::allocation::{allocate_refuges, allocation_violations, brute_force_allocation};
use gicoord_core::canonical::to_canonical_value;
use gicoord_core::scheduler::{build_schedule, feasibility_violations};
use gicoord_core::search::{brute_force_makespan, lower_bound, optimal_plan, OptimalPlan, SearchNode};
use gicoord_core::simulator::{replay, run, run_observed, SimConfig, Trace};
use gicoord_core::store::{load_scenario, load_trace, save_snapshot, save_trace, verify_trace, TraceDocument};
use gicoord_core::strategy::{apply_choice, enumerate_choices, evaluate};
use gicoord_core::{
    world_digest, Error, Event, EventKind, Schedule, StrategicDecision, Strategy, TaskState, WorldState,
};
use gicoord_testkit as kit;

const PLANNING_SEEDS: u64 = 250;
const ALLOCATION_SEEDS: u64 = 250;
const SIM_SEEDS: u64 = 50;
const DOCUMENT_SEEDS: u64 = 100;
const TIME_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

/// Running tally of every schedule checked for feasibility.
#[derive(Default)]
struct Feasibility {
    checked: Cell<usize>,
    failures: Cell<usize>,
    first: std::cell::RefCell<Option<String>>,
}

impl Feasibility {
    fn check(&self, world: &WorldState, strategy: &Strategy, s: &Schedule, what: &str) {
        self.checked.set(self.checked.get() + 1);
        let v = feasibility_violations(world, strategy, s);
        if !v.is_empty() {
            self.failures.set(self.failures.get() + 1);
            self.first.borrow_mut().get_or_insert_with(|| format!("{what}: {v:?}"));
        }
    }

    fn check_decision(&self, world: &WorldState, strategy: &Strategy, d: &StrategicDecision, s: &Schedule, what: &str) {
        match apply_choice(world, d) {
            Ok(applied) => self.check(&applied, strategy, s, what),
            Err(e) => {
                self.checked.set(self.checked.get() + 1);
                self.failures.set(self.failures.get() + 1);
                self.first.borrow_mut().get_or_insert_with(|| format!("{what}: {e}"));
            }
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn search_optimality(feas: &Feasibility) -> Outcome {
    let start = Instant::now();
    let mut finite = 0;
    for seed in 0..PLANNING_SEEDS {
        let (w, s) = kit::planning_instance(seed);
        match (brute_force_makespan(&w, &s), optimal_plan(&w, &s, u64::MAX)) {
            (Ok((_, best)), Ok(plan)) => {
                ensure(plan.proven_optimal, || format!("seed {seed}: not proven optimal"))?;
                if best.is_finite() {
                    finite += 1;
                    ensure((plan.makespan - best).abs() <= TIME_TOL, || {
                        format!("seed {seed}: search {} vs brute force {best}", plan.makespan)
                    })?;
                } else {
                    ensure(plan.makespan.is_infinite(), || {
                        format!("seed {seed}: finite search on uncoverable instance")
                    })?;
                }
                feas.check_decision(&w, &s, &plan.decision, &plan.schedule, &format!("search seed {seed}"));
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {}
            (a, b) => return Err(format!("seed {seed}: oracle {a:?} vs search {:?}", b.map(|p| p.makespan))),
        }
    }
    let took = start.elapsed();
    ensure(finite >= 200, || format!("only {finite} instances with a finite optimum"))?;
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!(
        "{PLANNING_SEEDS} instances, {finite} with finite optimum, equal within {TIME_TOL} s, {:.2} s",
        took.as_secs_f64()
    ))
}

fn allocation_optimality() -> Outcome {
    let mut placed = 0u64;
    for seed in 0..ALLOCATION_SEEDS {
        let w = kit::allocation_instance(seed);
        let speed = 1.0 + (seed % 7) as f64;
        let a = allocate_refuges(&w, speed, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let b = brute_force_allocation(&w, speed, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let v = allocation_violations(&a, &w);
        ensure(v.is_empty(), || format!("seed {seed}: {v:?}"))?;
        ensure(a.unassigned == b.unassigned, || {
            format!("seed {seed}: unassigned {} vs {}", a.unassigned, b.unassigned)
        })?;
        let tol = 1e-9 * b.total_cost.abs().max(1.0);
        ensure((a.total_cost - b.total_cost).abs() <= tol, || {
            format!("seed {seed}: cost {} vs brute force {}", a.total_cost, b.total_cost)
        })?;
        placed += a.flows.iter().map(|f| u64::from(f.persons)).sum::<u64>();
    }
    Ok(format!("{ALLOCATION_SEEDS} instances, {placed} persons placed, costs equal within 1e-9 relative"))
}

fn greedy_vs_optimal(feas: &Feasibility) -> Outcome {
    let mut decisions = 0;
    for seed in 0..PLANNING_SEEDS {
        let (w, s) = kit::planning_instance(seed);
        let Ok(plan) = optimal_plan(&w, &s, u64::MAX) else { continue };
        let root = lower_bound(&w, &s, &SearchNode::default());
        ensure(root <= plan.makespan + TIME_TOL, || format!("seed {seed}: root bound {root} > {}", plan.makespan))?;
        let greedy = plan.incumbent_history.first().copied().unwrap_or(f64::INFINITY);
        ensure(greedy >= plan.makespan - TIME_TOL, || format!("seed {seed}: greedy {greedy} < optimum"))?;
        let cs = enumerate_choices(&w, &s, usize::MAX).map_err(|e| format!("seed {seed}: {e}"))?;
        for d in &cs.decisions {
            let applied = apply_choice(&w, d).map_err(|e| format!("seed {seed}: {e}"))?;
            let sched = build_schedule(&applied, &s, d).map_err(|e| format!("seed {seed}: {e}"))?;
            if d.score.is_finite() {
                ensure(sched.makespan >= plan.makespan - TIME_TOL, || {
                    format!("seed {seed}: {} builds {} below optimum {}", d.id, sched.makespan, plan.makespan)
                })?;
            }
            feas.check(&applied, &s, &sched, &format!("choice {} seed {seed}", d.id));
            decisions += 1;
        }
    }
    let (mut singles, mut tight) = (0, 0);
    for seed in 0..100 {
        let (w, s) = kit::single_agent_instance(seed);
        let Ok(plan) = optimal_plan(&w, &s, u64::MAX) else { continue };
        if plan.makespan.is_infinite() {
            continue;
        }
        let cs = enumerate_choices(&w, &s, 1).map_err(|e| e.to_string())?;
        let top = &cs.decisions[0];
        let (d, sched) = evaluate(&w, &s, &top.assignment).map_err(|e| e.to_string())?;
        ensure((sched.makespan - plan.makespan).abs() <= TIME_TOL, || {
            format!("single seed {seed}: schedule {} vs optimum {}", sched.makespan, plan.makespan)
        })?;
        if (plan.root_bound - plan.makespan).abs() <= TIME_TOL {
            tight += 1;
        }
        feas.check_decision(&w, &s, &d, &sched, &format!("single seed {seed}"));
        singles += 1;
    }
    ensure(singles > 0, || "no single-agent instance was feasible".into())?;
    Ok(format!("{decisions} decisions bounded below by the optimum; root bound admissible; {singles} single-agent schedules equal to the optimum ({tight} with a tight bound)"))
}

fn hand_traced(feas: &Feasibility) -> Outcome {
    let near = |a: f64, b: f64| (a - b).abs() <= TIME_TOL;
    let (w, s) = kit::hand_traced(false);
    let d = StrategicDecision::new(&s.id, BTreeMap::from([("a1".to_string(), "T1".to_string())]), 0.0);
    let aw = apply_choice(&w, &d).map_err(|e| e.to_string())?;
    let sched = build_schedule(&aw, &s, &d).map_err(|e| e.to_string())?;
    feas.check(&aw, &s, &sched, "hand-traced");
    let e = sched.entries.first().ok_or("no entry")?;
    ensure(near(e.start, 100.0) && near(e.finish, 150.0), || format!("entry {}..{}", e.start, e.finish))?;
    ensure(near(sched.makespan, 150.0), || format!("makespan {}", sched.makespan))?;

    let (w, s) = kit::hand_traced(true);
    let aw = apply_choice(&w, &d).map_err(|e| e.to_string())?;
    let sched = build_schedule(&aw, &s, &d).map_err(|e| e.to_string())?;
    ensure(near(sched.adaption_time, 150.0), || format!("adaption_time {}", sched.adaption_time))?;
    let mut plans = 0;
    let trace = run_observed(&w, &s, &SimConfig::default(), |p| {
        feas.check(p.world, p.strategy, p.schedule, "hand-traced run");
        plans += 1;
    })
    .map_err(|e| e.to_string())?;
    let done: Vec<&Event> = trace.events.iter().filter(|e| matches!(e.kind, EventKind::TaskDone { .. })).collect();
    ensure(done.len() == 2, || format!("{} task_done events", done.len()))?;
    ensure(trace.final_world.macro_tasks.values().all(|t| t.state == TaskState::Done), || "work left over".into())?;
    ensure(trace.replans >= 1, || "no replans".into())?;
    Ok(format!(
        "entry 100..150, makespan 150, adaption 150; run finished phases at {:.3} and {:.3} s with {} replans",
        done[0].at, done[1].at, trace.replans
    ))
}

fn open_quantity(w: &WorldState) -> u64 {
    w.open_tasks().map(|t| u64::from(t.quantity)).sum()
}

fn conserved(t: &Trace) -> bool {
    let mut added = open_quantity(&t.initial);
    let mut done = 0u64;
    for e in &t.events {
        match &e.kind {
            EventKind::TasksRevealed { tasks, .. } => added += tasks.iter().map(|x| u64::from(x.quantity)).sum::<u64>(),
            EventKind::TaskDone { quantity, .. } => done += u64::from(*quantity),
            _ => {}
        }
    }
    added == done + open_quantity(&t.final_world)
}

/// An event with its time and continuous state stripped, leaving kind and ids.
fn identity(e: &Event) -> Value {
    let mut v = to_canonical_value(e);
    if let Value::Object(m) = &mut v {
        for k in ["at", "positions", "progress"] {
            m.remove(k);
        }
    }
    v
}

fn conservation_and_ticks(feas: &Feasibility) -> Outcome {
    let mut events = 0;
    for seed in 0..SIM_SEEDS {
        let (w, s) = kit::sim_instance(seed);
        let coarse = run_observed(&w, &s, &SimConfig { tick: 1.0, ..Default::default() }, |p| {
            feas.check(p.world, p.strategy, p.schedule, &format!("sim seed {seed} t={}", p.world.time))
        })
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let fine =
            run(&w, &s, &SimConfig { tick: 0.25, ..Default::default() }).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(conserved(&coarse) && conserved(&fine), || format!("seed {seed}: quantity not conserved"))?;
        ensure(coarse.events.len() == fine.events.len(), || {
            format!("seed {seed}: {} vs {} events", coarse.events.len(), fine.events.len())
        })?;
        for (a, b) in coarse.events.iter().zip(&fine.events) {
            ensure(identity(a) == identity(b), || format!("seed {seed}: {} vs {}", identity(a), identity(b)))?;
            ensure((a.at - b.at).abs() <= TIME_TOL, || {
                format!("seed {seed}: {} at {} vs {}", a.kind.name(), a.at, b.at)
            })?;
        }
        events += coarse.events.len();
    }
    Ok(format!("{SIM_SEEDS} scenarios, {events} events, tick 1.0 and 0.25 agree"))
}

fn determinism_and_replay() -> Outcome {
    for seed in 0..SIM_SEEDS {
        let (w, s) = kit::sim_instance(seed);
        let config = SimConfig { seed, ..Default::default() };
        let a = save_trace(&TraceDocument::from(&run(&w, &s, &config).map_err(|e| e.to_string())?));
        let b = save_trace(&TraceDocument::from(&run(&w, &s, &config).map_err(|e| e.to_string())?));
        ensure(a == b, || format!("seed {seed}: trace bytes differ"))?;
        let doc = load_trace(&a).map_err(|e| format!("seed {seed}: {e}"))?;
        verify_trace(&w, &doc).map_err(|e| format!("seed {seed}: {e}"))?;
        let end = replay(&w, &doc.events).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(world_digest(&end) == doc.final_digest, || format!("seed {seed}: replay digest differs"))?;
    }
    Ok(format!("{SIM_SEEDS} scenarios, byte-identical traces, replay reproduces every final digest"))
}

fn persistence() -> Outcome {
    for seed in 0..DOCUMENT_SEEDS {
        let d = kit::document(seed);
        let bytes = save_snapshot(&d);
        let back = load_scenario(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut sorted = d.clone();
        sorted.strategies.sort_by(|a, b| a.id.cmp(&b.id));
        sorted.strategies.iter_mut().for_each(|s| s.threads.sort_by(|a, b| a.id.cmp(&b.id)));
        ensure(back == sorted, || format!("seed {seed}: structure changed"))?;
        ensure(save_snapshot(&back) == bytes, || format!("seed {seed}: resave differs"))?;
        ensure(save_snapshot(&kit::shuffled(&d, seed)) == bytes, || format!("seed {seed}: order-dependent bytes"))?;
    }
    Ok(format!("{DOCUMENT_SEEDS} documents, structural equality and order-independent bytes"))
}

fn cli_end_to_end() -> Outcome {
    let good = fixture("good");
    let (o, bytes) = to_file(&["validate", path(&good)]);
    ensure(o.code == 0, || format!("validate exit {}: {}", o.code, o.stderr))?;
    golden("validate_good.json", &bytes)?;

    let (o, bytes) = to_file(&["search", "--budget", "100000", path(&fixture("two_agent"))]);
    ensure(o.code == 0, || format!("search exit {}: {}", o.code, o.stderr))?;
    let plan: OptimalPlan = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    ensure(plan.proven_optimal, || "search not proven optimal".into())?;
    golden("search_two_agent.json", &bytes)?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = tmp.path().join("chain.trace");
    let chain = fixture("chain");
    let o = gicoord(&["simulate", "--quiescence", path(&chain), "--out", path(&trace)]);
    ensure(o.code == 0, || format!("simulate exit {}: {}", o.code, o.stderr))?;
    golden("simulate_chain.json", &std::fs::read(&trace).map_err(|e| e.to_string())?)?;
    let (o, _) = to_file(&["replay", path(&chain), path(&trace)]);
    ensure(o.code == 0, || format!("replay exit {}: {}", o.code, o.stderr))?;
    Ok("validate, search and simulate --quiescence exit 0 and match goldens; replay check passes".into())
}

fn main() -> ExitCode {
    let feas = Feasibility::default();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("search optimality", Box::new(|| search_optimality(&feas))),
        ("allocation optimality", Box::new(allocation_optimality)),
        ("greedy vs optimal", Box::new(|| greedy_vs_optimal(&feas))),
        ("hand-traced fixture", Box::new(|| hand_traced(&feas))),
        ("simulator conservation and tick invariance", Box::new(|| conservation_and_ticks(&feas))),
        ("determinism and replay", Box::new(determinism_and_replay)),
        ("persistence round-trip", Box::new(persistence)),
        ("cli end-to-end", Box::new(cli_end_to_end)),
        (
            "schedule feasibility",
            Box::new(|| {
                let (n, bad) = (feas.checked.get(), feas.failures.get());
                ensure(n > 0 && bad == 0, || format!("{bad} of {n} infeasible; first: {:?}", feas.first.borrow()))?;
                Ok(format!("{n} schedules checked, 0 violations"))
            }),
        ),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
