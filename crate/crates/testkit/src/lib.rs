//! Seeded random instances and hand-built fixtures shared by the test suites.
//!
//! Every real value is drawn on a coarse grid, so it survives the 9-digit
//! canonical rendering unchanged.

use std::collections::BTreeSet;

use gicoord_core::canonical::round_sig;
use gicoord_core::geo::EARTH_RADIUS_M;
use gicoord_core::store::ScenarioDocument;
use gicoord_core::{
    Agent, AgentStatus, CasualtyCluster, GeoPoint, MacroTask, Refuge, Region, RevealRule, Strategy, TaskState,
    TaskType, Thread, WorldState,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TYPES: [&str; 3] = ["SEARCH", "RESCUE", "MEDIC"];

/// Centre of the city-scale box instances are drawn in.
pub const ORIGIN: GeoPoint = GeoPoint::new(135.76, 35.01);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn grid(x: f64, step: f64) -> f64 {
    round_sig((x / step).round() * step)
}

/// A point within about 2 km of [`ORIGIN`], on a micro-degree grid.
pub fn point(r: &mut impl Rng) -> GeoPoint {
    GeoPoint::new(grid(ORIGIN.lon + r.gen_range(-0.02..0.02), 1e-6), grid(ORIGIN.lat + r.gen_range(-0.02..0.02), 1e-6))
}

pub fn square(id: &str, c: GeoPoint, half: f64) -> Region {
    let (lo, la) = (c.lon, c.lat);
    Region {
        id: id.into(),
        name: id.to_lowercase(),
        boundary: vec![
            GeoPoint::new(grid(lo - half, 1e-6), grid(la - half, 1e-6)),
            GeoPoint::new(grid(lo + half, 1e-6), grid(la - half, 1e-6)),
            GeoPoint::new(grid(lo + half, 1e-6), grid(la + half, 1e-6)),
            GeoPoint::new(grid(lo - half, 1e-6), grid(la + half, 1e-6)),
        ],
    }
}

pub fn agent(id: &str, at: GeoPoint, speed: f64, caps: &[&str]) -> Agent {
    Agent {
        id: id.into(),
        kind: "team".into(),
        location: at,
        speed,
        capabilities: caps.iter().map(|c| c.to_string()).collect(),
        status: AgentStatus::Available,
        assigned_thread: None,
    }
}

pub fn task(id: &str, ty: &str, region: &str, quantity: u32) -> MacroTask {
    MacroTask {
        id: id.into(),
        task_type: ty.into(),
        region: region.into(),
        quantity,
        state: TaskState::Revealed,
        reveal_rules: Vec::new(),
        certainty: 1.0,
        progress: 0.0,
    }
}

pub fn thread(id: &str, priority: u32, types: &[&str], min: u32, max: u32) -> Thread {
    Thread {
        id: id.into(),
        priority,
        goal_task_types: types.iter().map(|t| t.to_string()).collect(),
        goal_regions: BTreeSet::new(),
        min_agents: min,
        max_agents: max,
    }
}

fn subset<'a>(r: &mut impl Rng, of: &[&'a str]) -> Vec<&'a str> {
    loop {
        let v: Vec<&str> = of.iter().copied().filter(|_| r.gen_bool(0.5)).collect();
        if !v.is_empty() {
            return v;
        }
    }
}

fn base_world(r: &mut impl Rng, regions: usize) -> WorldState {
    let mut w = WorldState::default();
    for ty in TYPES {
        w.insert_task_type(TaskType { id: ty.into(), unit_workload: f64::from(r.gen_range(2..=16u32) * 5) });
    }
    for i in 0..regions {
        let half = grid(r.gen_range(0.001..0.004), 1e-6);
        w.insert_region(square(&format!("R{}", i + 1), point(r), half));
    }
    w
}

/// A planning instance with 2 to 5 agents, 1 to 3 threads and 1 to 6 revealed
/// tasks. The strategy is valid; it may still be infeasible.
pub fn planning_instance(seed: u64) -> (WorldState, Strategy) {
    let mut r = rng(seed);
    let n_agents = r.gen_range(2..=5);
    planning_with(&mut r, n_agents)
}

/// Like [`planning_instance`] with exactly one agent.
pub fn single_agent_instance(seed: u64) -> (WorldState, Strategy) {
    let mut r = rng(seed ^ 0x5eed);
    planning_with(&mut r, 1)
}

fn planning_with(r: &mut impl Rng, n_agents: usize) -> (WorldState, Strategy) {
    let n_regions = r.gen_range(1..=3);
    let mut w = base_world(r, n_regions);
    for i in 0..n_agents {
        let speed = grid(r.gen_range(1.0..5.0), 0.5);
        let caps = subset(r, &TYPES);
        w.insert_agent(agent(&format!("a{}", i + 1), point(r), speed, &caps));
    }
    let n_tasks = r.gen_range(1..=6);
    for i in 0..n_tasks {
        let ty = *TYPES.choose(r).unwrap();
        let region = format!("R{}", r.gen_range(1..=n_regions));
        let mut t = task(&format!("t{}", i + 1), ty, &region, r.gen_range(1..=4));
        if r.gen_bool(0.2) {
            let succ = *TYPES.choose(r).unwrap();
            t.reveal_rules.push(RevealRule { successor_type: succ.into(), expected_count: r.gen_range(0..=2) });
        }
        w.insert_task(t);
    }
    let n_threads = r.gen_range(1..=3);
    let mut threads = Vec::new();
    for i in 0..n_threads {
        let types = subset(r, &TYPES);
        let min = if r.gen_bool(0.3) { 1 } else { 0 };
        let max = r.gen_range(min.max(1)..=3);
        let mut t = thread(&format!("T{}", i + 1), r.gen_range(1..=3), &types, min, max);
        if r.gen_bool(0.3) {
            t.goal_regions.insert(format!("R{}", r.gen_range(1..=n_regions)));
        }
        threads.push(t);
    }
    (w, Strategy { id: "S".into(), objective: "clear all tasks".into(), threads })
}

/// A refuge allocation instance inside the exhaustive oracle's limits:
/// at most 8 persons in total and at most 3 refuges.
pub fn allocation_instance(seed: u64) -> WorldState {
    let mut r = rng(seed);
    let mut w = WorldState::default();
    let mut budget: u32 = r.gen_range(0..=8);
    let n_clusters = r.gen_range(1..=3);
    for i in 0..n_clusters {
        let count = if i + 1 == n_clusters { budget } else { r.gen_range(0..=budget) };
        budget -= count;
        w.insert_cluster(CasualtyCluster {
            id: format!("c{}", i + 1),
            location: point(&mut r),
            count,
            severity: r.gen_range(1..=5),
        });
    }
    for i in 0..r.gen_range(1..=3) {
        let capacity = r.gen_range(0..=6);
        w.insert_refuge(Refuge {
            id: format!("f{}", i + 1),
            location: point(&mut r),
            capacity,
            occupied: r.gen_range(0..=capacity),
        });
    }
    w
}

/// A simulation instance with reveal chains and hidden follow-ups.
pub fn sim_instance(seed: u64) -> (WorldState, Strategy) {
    let mut r = rng(seed);
    let n_agents = r.gen_range(1..=4);
    let (mut w, mut s) = planning_with(&mut r, n_agents);
    let ids: Vec<String> = w.macro_tasks.keys().cloned().collect();
    for id in ids {
        if r.gen_bool(0.4) {
            let succ = *TYPES.choose(&mut r).unwrap();
            let t = w.macro_tasks.get_mut(&id).unwrap();
            t.reveal_rules = vec![RevealRule { successor_type: succ.into(), expected_count: r.gen_range(1..=2) }];
            if r.gen_bool(0.5) {
                // A hidden placeholder for the same successor.
                let mut h = task(&format!("{id}/{succ}"), succ, &t.region.clone(), 1);
                h.state = TaskState::Hidden;
                w.insert_task(h);
            }
        }
    }
    for t in &mut s.threads {
        t.min_agents = 0;
    }
    // Mostly coverable, so runs get somewhere; a few are left to stall.
    if r.gen_bool(0.8) {
        let ids: Vec<String> = w.agents.keys().cloned().collect();
        for ty in TYPES {
            if !w.agents.values().any(|a| a.can_do(ty)) {
                let id = ids.choose(&mut r).unwrap();
                w.agents.get_mut(id).unwrap().capabilities.insert(ty.into());
            }
        }
        s.threads.push(thread("T9", 4, &TYPES, 0, 2));
    }
    (w, s)
}

/// Random scenario document of moderate size.
pub fn document(seed: u64) -> ScenarioDocument {
    let mut r = rng(seed);
    let (mut w, s) = planning_instance(r.gen());
    let alloc = allocation_instance(r.gen());
    w.refuges = alloc.refuges;
    w.casualty_clusters = alloc.casualty_clusters;
    w.time = grid(r.gen_range(0.0..1000.0), 0.25);
    let mut strategies = vec![s];
    if r.gen_bool(0.5) {
        let (_, mut other) = planning_instance(r.gen());
        other.id = "S2".into();
        other.threads.retain(|t| t.goal_regions.iter().all(|g| w.regions.contains_key(g)));
        if !other.threads.is_empty() {
            strategies.push(other);
        }
    }
    let mut d = ScenarioDocument::new(w, strategies);
    d.metadata.insert("name".into(), format!("doc-{seed}"));
    d
}

/// The same document rebuilt in a shuffled construction order.
pub fn shuffled(doc: &ScenarioDocument, seed: u64) -> ScenarioDocument {
    let mut r = rng(seed);
    let mut w = WorldState { time: doc.world.time, ..Default::default() };
    let mut agents: Vec<_> = doc.world.agents.values().cloned().collect();
    agents.shuffle(&mut r);
    agents.into_iter().for_each(|a| w.insert_agent(a));
    let mut tasks: Vec<_> = doc.world.macro_tasks.values().cloned().collect();
    tasks.shuffle(&mut r);
    tasks.into_iter().for_each(|t| w.insert_task(t));
    let mut regions: Vec<_> = doc.world.regions.values().cloned().collect();
    regions.shuffle(&mut r);
    regions.into_iter().for_each(|x| w.insert_region(x));
    let mut types: Vec<_> = doc.world.task_types.values().cloned().collect();
    types.shuffle(&mut r);
    types.into_iter().for_each(|x| w.insert_task_type(x));
    let mut refuges: Vec<_> = doc.world.refuges.values().cloned().collect();
    refuges.shuffle(&mut r);
    refuges.into_iter().for_each(|x| w.insert_refuge(x));
    let mut clusters: Vec<_> = doc.world.casualty_clusters.values().cloned().collect();
    clusters.shuffle(&mut r);
    clusters.into_iter().for_each(|x| w.insert_cluster(x));
    let mut strategies = doc.strategies.clone();
    strategies.shuffle(&mut r);
    for s in &mut strategies {
        s.threads.shuffle(&mut r);
    }
    let mut d = ScenarioDocument::new(w, strategies);
    for (k, v) in doc.metadata.iter().rev() {
        d.metadata.insert(k.clone(), v.clone());
    }
    d
}

/// One agent 100 m due north of a tiny region, speed 1 m/s, one SEARCH task
/// of quantity 1 at 50 s per unit. With `reveal`, finishing it reveals two
/// RESCUE micro tasks.
pub fn hand_traced(reveal: bool) -> (WorldState, Strategy) {
    let mut w = WorldState::default();
    w.insert_task_type(TaskType { id: "SEARCH".into(), unit_workload: 50.0 });
    w.insert_task_type(TaskType { id: "RESCUE".into(), unit_workload: 40.0 });
    w.insert_region(square("R1", GeoPoint::new(135.0, 35.0), 0.0001));
    let c = gicoord_core::geo::region_centroid(&w.regions["R1"]).point;
    let north = GeoPoint::new(c.lon, c.lat + (100.0 / EARTH_RADIUS_M).to_degrees());
    w.insert_agent(agent("a1", north, 1.0, &["SEARCH", "RESCUE"]));
    let mut t = task("t1", "SEARCH", "R1", 1);
    if reveal {
        t.reveal_rules.push(RevealRule { successor_type: "RESCUE".into(), expected_count: 2 });
    }
    w.insert_task(t);
    let s = Strategy {
        id: "S".into(),
        objective: "search then rescue".into(),
        threads: vec![thread("T1", 1, &["SEARCH", "RESCUE"], 1, 1)],
    };
    (w, s)
}

/// Two agents, two threads; the cheap-looking assignment is not the best one.
pub fn two_agent() -> (WorldState, Strategy) {
    let mut w = WorldState::default();
    w.insert_task_type(TaskType { id: "SEARCH".into(), unit_workload: 30.0 });
    w.insert_task_type(TaskType { id: "RESCUE".into(), unit_workload: 60.0 });
    w.insert_region(square("R1", GeoPoint::new(135.76, 35.01), 0.001));
    w.insert_region(square("R2", GeoPoint::new(135.78, 35.0), 0.001));
    w.insert_agent(agent("a1", GeoPoint::new(135.75, 35.0), 2.0, &["SEARCH", "RESCUE"]));
    w.insert_agent(agent("a2", GeoPoint::new(135.77, 35.02), 3.0, &["SEARCH", "RESCUE"]));
    w.insert_task(task("t1", "SEARCH", "R1", 4));
    w.insert_task(task("t2", "RESCUE", "R2", 2));
    let mut t1 = thread("T1", 1, &["SEARCH"], 1, 1);
    t1.goal_regions.insert("R1".into());
    let mut t2 = thread("T2", 2, &["RESCUE"], 1, 1);
    t2.goal_regions.insert("R2".into());
    (w, Strategy { id: "S".into(), objective: "clear both zones".into(), threads: vec![t1, t2] })
}

/// A small but complete scenario: regions, agents, tasks, refuges and clusters.
pub fn good() -> ScenarioDocument {
    let (mut w, s) = two_agent();
    w.insert_refuge(Refuge { id: "f1".into(), location: GeoPoint::new(135.765, 35.005), capacity: 30, occupied: 4 });
    w.insert_refuge(Refuge { id: "f2".into(), location: GeoPoint::new(135.775, 35.015), capacity: 10, occupied: 0 });
    w.insert_cluster(CasualtyCluster {
        id: "c1".into(),
        location: GeoPoint::new(135.76, 35.01),
        count: 12,
        severity: 3,
    });
    w.insert_cluster(CasualtyCluster { id: "c2".into(), location: GeoPoint::new(135.78, 35.0), count: 5, severity: 5 });
    w.insert_task_type(TaskType { id: "TRANSPORT".into(), unit_workload: 120.0 });
    let mut s = s;
    let mut t3 = thread("T3", 3, &["TRANSPORT"], 0, 1);
    t3.goal_regions.extend(["R1".to_string(), "R2".to_string()]);
    s.threads.push(t3);
    let mut d = ScenarioDocument::new(w, vec![s]);
    d.metadata.insert("name".into(), "good".into());
    d
}

pub fn scenario(world: WorldState, strategy: Strategy, name: &str) -> ScenarioDocument {
    let mut d = ScenarioDocument::new(world, vec![strategy]);
    d.metadata.insert("name".into(), name.into());
    d
}
