//! Casualty-cluster to refuge matching as a minimum-cost flow.
//!
//! Cost of moving one person is `severity × travel seconds`. Arc costs are
//! kept in severity-metres internally so the chosen flows never depend on the
//! transport speed; only the reported total is divided by it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, point_in_region};
use crate::model::{ClusterId, RefugeId, Strategy, Violation, WorldState};

pub const BRUTE_FORCE_MAX_PERSONS: u32 = 8;
pub const BRUTE_FORCE_MAX_REFUGES: usize = 3;
const TRANSPORT: &str = "TRANSPORT";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flow {
    pub cluster: ClusterId,
    pub refuge: RefugeId,
    pub persons: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub flows: Vec<Flow>,
    pub total_cost: f64,
    pub unassigned: u32,
    /// Clusters that took part in the program.
    pub clusters: Vec<ClusterId>,
}

/// Clusters allowed by the strategy: those inside a goal region of a thread
/// that includes TRANSPORT. Without a strategy every cluster takes part.
pub fn participating_clusters(world: &WorldState, strategy: Option<&Strategy>) -> Vec<ClusterId> {
    let Some(strategy) = strategy else {
        return world.casualty_clusters.keys().cloned().collect();
    };
    let transport: Vec<_> = strategy.threads.iter().filter(|t| t.goal_task_types.contains(TRANSPORT)).collect();
    world
        .casualty_clusters
        .values()
        .filter(|c| {
            transport.iter().any(|t| {
                world.regions.values().filter(|r| t.covers_region(&r.id)).any(|r| point_in_region(c.location, r))
            })
        })
        .map(|c| c.id.clone())
        .collect()
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[to].push(id + 1);
        id
    }

    /// Successive shortest paths with Bellman-Ford; returns the flow pushed.
    fn min_cost_max_flow(&mut self, s: usize, t: usize) -> i64 {
        let n = self.adj.len();
        let mut total = 0;
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut via: Vec<Option<usize>> = vec![None; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        let nd = dist[u] + edge.cost;
                        if edge.cap > 0 && nd < dist[edge.to] - 1e-9 * nd.abs().max(1.0) {
                            dist[edge.to] = nd;
                            via[edge.to] = Some(e);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[t].is_finite() {
                return total;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while let Some(e) = via[v] {
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while let Some(e) = via[v] {
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            total += push;
        }
    }
}

fn check_speed(speed: f64) -> Result<()> {
    if speed.is_finite() && speed > 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("transport speed must be positive, got {speed}")))
    }
}

/// Optimal matching of the participating clusters to refuges.
pub fn allocate_refuges(world: &WorldState, transport_speed: f64, strategy: Option<&Strategy>) -> Result<Allocation> {
    check_speed(transport_speed)?;
    let clusters = participating_clusters(world, strategy);
    let refuges: Vec<_> = world.refuges.values().collect();
    let (nc, nr) = (clusters.len(), refuges.len());
    let (s, t) = (nc + nr, nc + nr + 1);
    let mut g = Graph::new(nc + nr + 2);
    let mut arcs = Vec::new();
    for (i, cid) in clusters.iter().enumerate() {
        let c = &world.casualty_clusters[cid];
        g.add(s, i, c.count as i64, 0.0);
        for (j, r) in refuges.iter().enumerate() {
            let w = c.severity as f64 * haversine_distance(c.location, r.location);
            arcs.push((g.add(i, nc + j, i64::MAX / 4, w), i, j));
        }
    }
    for (j, r) in refuges.iter().enumerate() {
        g.add(nc + j, t, r.free_capacity() as i64, 0.0);
    }
    g.min_cost_max_flow(s, t);

    let mut flows = Vec::new();
    for (e, i, j) in arcs {
        let persons = g.edges[e ^ 1].cap;
        if persons > 0 {
            flows.push(Flow { cluster: clusters[i].clone(), refuge: refuges[j].id.clone(), persons: persons as u32 });
        }
    }
    flows.sort();
    finish(world, transport_speed, clusters, flows)
}

fn finish(world: &WorldState, speed: f64, clusters: Vec<ClusterId>, flows: Vec<Flow>) -> Result<Allocation> {
    let demand: u32 = clusters.iter().map(|c| world.casualty_clusters[c].count).sum();
    let served: u32 = flows.iter().map(|f| f.persons).sum();
    let mut a = Allocation { flows, total_cost: 0.0, unassigned: demand - served, clusters };
    a.total_cost = allocation_cost(&a, world, speed)?;
    Ok(a)
}

/// Objective recomputed from raw world data.
pub fn allocation_cost(a: &Allocation, world: &WorldState, transport_speed: f64) -> Result<f64> {
    check_speed(transport_speed)?;
    let mut v = Vec::new();
    let mut total = 0.0;
    for (i, f) in a.flows.iter().enumerate() {
        let c = world.casualty_clusters.get(&f.cluster);
        let r = world.refuges.get(&f.refuge);
        if c.is_none() {
            v.push(Violation::new(format!("flows/{i}/cluster"), format!("unknown cluster {}", f.cluster)));
        }
        if r.is_none() {
            v.push(Violation::new(format!("flows/{i}/refuge"), format!("unknown refuge {}", f.refuge)));
        }
        if let (Some(c), Some(r)) = (c, r) {
            let secs = haversine_distance(c.location, r.location) / transport_speed;
            total += f.persons as f64 * c.severity as f64 * secs;
        }
    }
    if v.is_empty() {
        Ok(total)
    } else {
        Err(Error::Validation(v))
    }
}

/// Independent constraint checker. Empty means the allocation is admissible.
pub fn allocation_violations(a: &Allocation, world: &WorldState) -> Vec<String> {
    let mut v = Vec::new();
    let considered: BTreeSet<&str> = a.clusters.iter().map(String::as_str).collect();
    let mut to_refuge: BTreeMap<&str, u64> = BTreeMap::new();
    let mut from_cluster: BTreeMap<&str, u64> = BTreeMap::new();
    for f in &a.flows {
        if f.persons == 0 {
            v.push(format!("{}→{}: empty flow", f.cluster, f.refuge));
        }
        if !considered.contains(f.cluster.as_str()) {
            v.push(format!("{}: cluster did not take part", f.cluster));
        }
        *to_refuge.entry(&f.refuge).or_default() += f.persons as u64;
        *from_cluster.entry(&f.cluster).or_default() += f.persons as u64;
    }
    for (r, n) in &to_refuge {
        match world.refuges.get(*r) {
            Some(refuge) if *n > refuge.free_capacity() as u64 => {
                v.push(format!("{r}: {n} persons exceed free capacity {}", refuge.free_capacity()))
            }
            None => v.push(format!("{r}: unknown refuge")),
            _ => {}
        }
    }
    for (c, n) in &from_cluster {
        match world.casualty_clusters.get(*c) {
            Some(cl) if *n > cl.count as u64 => v.push(format!("{c}: {n} persons exceed count {}", cl.count)),
            None => v.push(format!("{c}: unknown cluster")),
            _ => {}
        }
    }
    let demand: u64 = a.clusters.iter().filter_map(|c| world.casualty_clusters.get(c)).map(|c| c.count as u64).sum();
    let served: u64 = from_cluster.values().sum();
    if served + a.unassigned as u64 != demand {
        v.push(format!("served {served} + unassigned {} != demand {demand}", a.unassigned));
    }
    v
}

/// Exhaustive oracle over integer flow matrices.
pub fn brute_force_allocation(
    world: &WorldState,
    transport_speed: f64,
    strategy: Option<&Strategy>,
) -> Result<Allocation> {
    check_speed(transport_speed)?;
    let clusters = participating_clusters(world, strategy);
    let refuges: Vec<_> = world.refuges.values().collect();
    let persons: u32 = clusters.iter().map(|c| world.casualty_clusters[c].count).sum();
    if persons > BRUTE_FORCE_MAX_PERSONS || refuges.len() > BRUTE_FORCE_MAX_REFUGES {
        return Err(Error::Size(format!(
            "{persons} persons and {} refuges exceed the {BRUTE_FORCE_MAX_PERSONS}/{BRUTE_FORCE_MAX_REFUGES} guard",
            refuges.len()
        )));
    }
    let cost_of = |m: &[Vec<u32>]| -> f64 {
        let mut total = 0.0;
        for (i, row) in m.iter().enumerate() {
            let c = &world.casualty_clusters[&clusters[i]];
            for (j, n) in row.iter().enumerate() {
                total += *n as f64 * c.severity as f64 * haversine_distance(c.location, refuges[j].location);
            }
        }
        total / transport_speed
    };
    let to_flows = |m: &[Vec<u32>]| -> Vec<Flow> {
        let mut out = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, n) in row.iter().enumerate() {
                if *n > 0 {
                    out.push(Flow { cluster: clusters[i].clone(), refuge: refuges[j].id.clone(), persons: *n });
                }
            }
        }
        out.sort();
        out
    };

    let mut best: Option<(u32, f64, Vec<Flow>)> = None;
    let mut matrix = vec![vec![0u32; refuges.len()]; clusters.len()];
    let mut used = vec![0u32; refuges.len()];
    fn rows(
        i: usize,
        j: usize,
        left: u32,
        m: &mut Vec<Vec<u32>>,
        used: &mut Vec<u32>,
        ctx: &dyn Fn(&[Vec<u32>]) -> bool,
        visit: &mut dyn FnMut(&[Vec<u32>]),
        counts: &[u32],
        caps: &[u32],
    ) {
        if i == m.len() {
            if ctx(m) {
                visit(m);
            }
            return;
        }
        if j == caps.len() {
            let next = counts.get(i + 1).copied().unwrap_or(0);
            rows(i + 1, 0, next, m, used, ctx, visit, counts, caps);
            return;
        }
        for n in 0..=left.min(caps[j] - used[j]) {
            m[i][j] = n;
            used[j] += n;
            rows(i, j + 1, left - n, m, used, ctx, visit, counts, caps);
            used[j] -= n;
        }
        m[i][j] = 0;
    }
    let counts: Vec<u32> = clusters.iter().map(|c| world.casualty_clusters[c].count).collect();
    let caps: Vec<u32> = refuges.iter().map(|r| r.free_capacity()).collect();
    let mut visit = |m: &[Vec<u32>]| {
        let served: u32 = m.iter().flatten().sum();
        let key = (persons - served, cost_of(m), to_flows(m));
        let better = best
            .as_ref()
            .is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && (key.1 < b.1 || (key.1 == b.1 && key.2 < b.2))));
        if better {
            best = Some(key);
        }
    };
    let first = counts.first().copied().unwrap_or(0);
    rows(0, 0, first, &mut matrix, &mut used, &|_| true, &mut visit, &counts, &caps);
    let (_, _, flows) = best.expect("the empty matrix is always admissible");
    finish(world, transport_speed, clusters, flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::Strategy as Plan;
    use crate::model::{CasualtyCluster, GeoPoint, Refuge};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as _;

    fn world(clusters: &[(&str, f64, u32, u32)], refuges: &[(&str, f64, u32, u32)]) -> WorldState {
        let mut w = WorldState::default();
        for (id, lon, count, severity) in clusters {
            w.insert_cluster(CasualtyCluster {
                id: id.to_string(),
                location: GeoPoint::new(*lon, 35.0),
                count: *count,
                severity: *severity,
            });
        }
        for (id, lon, capacity, occupied) in refuges {
            w.insert_refuge(Refuge {
                id: id.to_string(),
                location: GeoPoint::new(*lon, 35.01),
                capacity: *capacity,
                occupied: *occupied,
            });
        }
        w
    }

    #[test]
    fn single_option() {
        let w = world(&[("A", 135.0, 2, 1)], &[("R1", 135.0, 5, 0)]);
        let a = allocate_refuges(&w, 10.0, None).unwrap();
        assert_eq!(a.flows, vec![Flow { cluster: "A".into(), refuge: "R1".into(), persons: 2 }]);
        assert_eq!(a.unassigned, 0);
        assert_eq!(a, brute_force_allocation(&w, 10.0, None).unwrap());
    }

    #[test]
    fn two_by_two() {
        let w = world(&[("A", 135.0, 3, 1), ("B", 135.1, 2, 1)], &[("R1", 135.0, 3, 0), ("R2", 135.1, 2, 0)]);
        let a = allocate_refuges(&w, 10.0, None).unwrap();
        assert_eq!(
            a.flows,
            vec![
                Flow { cluster: "A".into(), refuge: "R1".into(), persons: 3 },
                Flow { cluster: "B".into(), refuge: "R2".into(), persons: 2 },
            ]
        );
        let b = brute_force_allocation(&w, 10.0, None).unwrap();
        assert!((a.total_cost - b.total_cost).abs() <= 1e-9 * b.total_cost);
    }

    #[test]
    fn no_capacity() {
        let w = world(&[("A", 135.0, 3, 1)], &[("R1", 135.0, 4, 4)]);
        let a = allocate_refuges(&w, 10.0, None).unwrap();
        assert!(a.flows.is_empty());
        assert_eq!(a.unassigned, 3);
    }

    #[test]
    fn cost_examples() {
        let w = world(&[("A", 135.0, 3, 2)], &[("R1", 135.0, 4, 0)]);
        let empty = Allocation { flows: vec![], total_cost: 0.0, unassigned: 3, clusters: vec!["A".into()] };
        assert_eq!(allocation_cost(&empty, &w, 1.0).unwrap(), 0.0);
        let d = haversine_distance(w.casualty_clusters["A"].location, w.refuges["R1"].location);
        let one = Allocation {
            flows: vec![Flow { cluster: "A".into(), refuge: "R1".into(), persons: 2 }],
            total_cost: 0.0,
            unassigned: 1,
            clusters: vec!["A".into()],
        };
        // Speed chosen so the trip takes 100 s: 2 persons × severity 2 × 100 s.
        assert!((allocation_cost(&one, &w, d / 100.0).unwrap() - 400.0).abs() < 1e-6);
        let dangling = Allocation { flows: vec![Flow { cluster: "Z".into(), refuge: "R1".into(), persons: 1 }], ..one };
        assert!(matches!(allocation_cost(&dangling, &w, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn guard_and_speed() {
        let w = world(&[("A", 135.0, 9, 1)], &[("R1", 135.0, 9, 0)]);
        assert!(matches!(brute_force_allocation(&w, 1.0, None), Err(Error::Size(_))));
        assert!(matches!(allocate_refuges(&w, 0.0, None), Err(Error::Contract(_))));
    }

    #[test]
    fn strategy_filter() {
        let mut w = world(&[("A", 135.0, 1, 1), ("B", 136.0, 1, 1)], &[("R1", 135.0, 5, 0)]);
        w.insert_region(square("R", 135.0, 35.0, 0.01));
        let mut t = thread("T", 1, &["TRANSPORT"], 0, 1);
        t.goal_regions = ["R".to_string()].into();
        let s = Plan { id: "S".into(), objective: "".into(), threads: vec![t] };
        assert_eq!(participating_clusters(&w, Some(&s)), vec!["A".to_string()]);
        let none = Plan { id: "S".into(), objective: "".into(), threads: vec![thread("T", 1, &["SEARCH"], 0, 1)] };
        assert!(allocate_refuges(&w, 1.0, Some(&none)).unwrap().clusters.is_empty());
    }

    fn arb_world() -> impl proptest::strategy::Strategy<Value = WorldState> {
        let cluster = (0.0f64..0.05, 0u32..4, 1u32..4);
        let refuge = (0.0f64..0.05, 0u32..5, 0u32..3);
        (prop::collection::vec(cluster, 0..4), prop::collection::vec(refuge, 0..4)).prop_map(|(cs, rs)| {
            let mut w = WorldState::default();
            for (i, (dx, count, sev)) in cs.into_iter().enumerate() {
                w.insert_cluster(CasualtyCluster {
                    id: format!("C{i}"),
                    location: GeoPoint::new(135.0 + dx, 35.0),
                    count,
                    severity: sev,
                });
            }
            for (i, (dx, cap, occ)) in rs.into_iter().enumerate() {
                w.insert_refuge(Refuge {
                    id: format!("R{i}"),
                    location: GeoPoint::new(135.0 + dx, 35.02),
                    capacity: cap + occ,
                    occupied: occ,
                });
            }
            w
        })
    }

    proptest! {
        #[test]
        fn constraints_and_conservation(w in arb_world(), speed in 0.5f64..20.0) {
            let a = allocate_refuges(&w, speed, None).unwrap();
            prop_assert!(allocation_violations(&a, &w).is_empty());
            let served: u32 = a.flows.iter().map(|f| f.persons).sum();
            let total: u32 = w.casualty_clusters.values().map(|c| c.count).sum();
            prop_assert_eq!(served + a.unassigned, total);
        }

        #[test]
        fn speed_scale_keeps_flows(w in arb_world(), speed in 0.5f64..20.0, k in 0.1f64..10.0) {
            let a = allocate_refuges(&w, speed, None).unwrap();
            let b = allocate_refuges(&w, speed * k, None).unwrap();
            prop_assert_eq!(&a.flows, &b.flows);
            prop_assert!((a.total_cost - b.total_cost * k).abs() <= 1e-9 * a.total_cost.max(1.0));
        }
    }
}
