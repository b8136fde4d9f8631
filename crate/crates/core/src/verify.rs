//! Independent reference implementations used to check the main pipeline:
//! an exhaustive rotation search in exact parameter space, exhaustive path
//! enumeration on a built graph, the exact-cover reduction, and harnesses
//! for the rounding error and underestimation properties.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::discretization::{Discretization, GridRounder};
use crate::error::{Error, Result};
use crate::graph::{Arc, Node, NodeKind, Seeg};
use crate::health::{lipschitz_unit, RegionSet, ORDER_TOL};
use crate::instance::{Instance, ParameterPoint, RotationPlan, ServiceKind, ServiceStep};

pub const ORACLE_MAX_TRIPS: usize = 7;
pub const ORACLE_MAX_VEHICLES: usize = 3;
pub const ORACLE_MAX_LOCATIONS: usize = 4;
/// Arc groups handled by the graph enumeration (one bit each).
pub const GRAPH_ORACLE_MAX_GROUPS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Rotations(RotationPlan),
    /// Indices of the chosen subsets.
    Subcollection(Vec<usize>),
    /// Chosen path (arc ids) per used vehicle start arc.
    Paths(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    /// `None` when no feasible assignment exists.
    pub optimum: Option<f64>,
    pub assignment: Option<Assignment>,
    /// Partial assignments generated during the search.
    pub enumerated: u64,
}

/// One way a single vehicle can spend the horizon.
#[derive(Clone, Debug)]
struct VehicleOption<P> {
    mask: u64,
    start: usize,
    end: usize,
    cost: f64,
    payload: P,
}

/// Picks at most one option per vehicle so that group `g` is covered
/// exactly `demands[g]` times and every location keeps its vehicle count.
fn combine<P: Clone>(
    options: &[Vec<VehicleOption<P>>],
    demands: &[u32],
    n_locations: usize,
    enumerated: &mut u64,
) -> Option<(f64, Vec<Option<usize>>)> {
    type Key = (Vec<u32>, Vec<i32>);
    let mut layer: BTreeMap<Key, (f64, Vec<Option<usize>>)> = BTreeMap::new();
    layer.insert((vec![0; demands.len()], vec![0; n_locations]), (0.0, Vec::new()));
    for opts in options {
        let mut next: BTreeMap<Key, (f64, Vec<Option<usize>>)> = BTreeMap::new();
        for ((cover, balance), (cost, picks)) in &layer {
            let mut push = |key: Key, c: f64, pick: Option<usize>| {
                *enumerated += 1;
                let better = next.get(&key).is_none_or(|(old, _)| c < *old);
                if better {
                    let mut p = picks.clone();
                    p.push(pick);
                    next.insert(key, (c, p));
                }
            };
            push((cover.clone(), balance.clone()), *cost, None);
            'opt: for (i, o) in opts.iter().enumerate() {
                let mut cv = cover.clone();
                for (g, count) in cv.iter_mut().enumerate() {
                    if o.mask >> g & 1 == 1 {
                        *count += 1;
                        if *count > demands[g] {
                            continue 'opt;
                        }
                    }
                }
                let mut bal = balance.clone();
                bal[o.start] += 1;
                bal[o.end] -= 1;
                push((cv, bal), cost + o.cost, Some(i));
            }
        }
        layer = next;
    }
    layer
        .into_iter()
        .find(|((cover, balance), _)| cover.as_slice() == demands && balance.iter().all(|b| *b == 0))
        .map(|(_, v)| v)
}

#[derive(Clone, Copy, Debug, Default)]
struct EventFlags {
    start: bool,
    end: bool,
    departure: bool,
    arrival: bool,
    maintenance: bool,
}

/// Event times per location, derived directly from the timetable.
struct Timeline {
    events: Vec<BTreeMap<u32, EventFlags>>,
    end: u32,
}

impl Timeline {
    fn new(instance: &Instance) -> Self {
        let end = instance.end_time();
        let mut events: Vec<BTreeMap<u32, EventFlags>> = vec![BTreeMap::new(); instance.n_locations()];
        for ev in events.iter_mut() {
            ev.entry(0).or_default().start = true;
            ev.entry(end).or_default().end = true;
        }
        for t in &instance.trips {
            events[t.dep_loc].entry(t.dep_time).or_default().departure = true;
            events[t.arr_loc].entry(t.arr_time).or_default().arrival = true;
        }
        let trip_events: Vec<(usize, u32)> = instance
            .trips
            .iter()
            .flat_map(|t| [(t.dep_loc, t.dep_time), (t.arr_loc, t.arr_time)])
            .collect();
        for (l, k) in trip_events {
            for m in instance.maintenance_locations() {
                let done = k as u64 + instance.costs.travel_time[l][m] as u64 + instance.locations[m].service_duration as u64;
                if done <= instance.horizon as u64 {
                    events[m].entry(done as u32).or_default().maintenance = true;
                }
            }
        }
        Timeline { events, end }
    }

    fn flags(&self, l: usize, k: u32) -> EventFlags {
        self.events[l][&k]
    }

    fn next_time(&self, l: usize, k: u32) -> Option<u32> {
        self.events[l].range(k + 1..).next().map(|(t, _)| *t)
    }

    fn is_source(f: EventFlags) -> bool {
        !f.end && (f.start || f.arrival || f.maintenance)
    }

    fn is_target(f: EventFlags) -> bool {
        f.end || f.departure
    }

    /// Deadhead target at `l2` for a vehicle leaving `l` at `k`, if this
    /// departure is the latest one at `l` that still makes the connection.
    fn deadhead(&self, instance: &Instance, l: usize, k: u32, l2: usize) -> Option<u32> {
        let tt = instance.costs.travel_time[l][l2] as u64;
        let ready = k as u64 + tt;
        let (&target, _) = self.events[l2]
            .iter()
            .find(|(t, f)| Self::is_target(**f) && (f.end || **t as u64 >= ready))?;
        let target_time = if target == self.end { u64::MAX } else { target as u64 };
        let (&latest, _) = self.events[l]
            .iter()
            .rev()
            .find(|(t, f)| Self::is_source(**f) && **t as u64 + tt <= target_time)?;
        (latest == k).then_some(target)
    }
}

#[derive(Clone, Debug)]
struct Label {
    cost: f64,
    theta: ParameterPoint,
    mask: u64,
    prev: Option<usize>,
    step: ServiceStep,
}

type Pending = BTreeMap<(u32, usize), BTreeMap<(u64, Vec<u64>), usize>>;

/// Keeps `label` at event `at` unless an equal state is already cheaper.
fn offer(arena: &mut Vec<Label>, pending: &mut Pending, at: (u32, usize), label: Label) {
    let key = (label.mask, theta_key(&label.theta));
    let slot = pending.entry(at).or_default();
    match slot.get(&key) {
        Some(&old) if arena[old].cost <= label.cost => {}
        _ => {
            slot.insert(key, arena.len());
            arena.push(label);
        }
    }
}

fn theta_key(theta: &ParameterPoint) -> Vec<u64> {
    theta.0.iter().map(|x| x.to_bits()).collect()
}

/// Exhaustive search for an optimal rotation plan with exact parameters.
///
/// Vehicles move between event times only; every vehicle's best way to
/// cover each trip subset is found by a label-setting search, and the
/// subsets are then combined under coverage and balance.
pub fn enumerate_optimal(instance: &Instance) -> Result<OracleResult> {
    if instance.trips.len() > ORACLE_MAX_TRIPS
        || instance.vehicles.len() > ORACLE_MAX_VEHICLES
        || instance.n_locations() > ORACLE_MAX_LOCATIONS
    {
        return Err(Error::OracleGuard(format!(
            "{} trips, {} vehicles, {} locations (limits {ORACLE_MAX_TRIPS}, {ORACLE_MAX_VEHICLES}, {ORACLE_MAX_LOCATIONS})",
            instance.trips.len(),
            instance.vehicles.len(),
            instance.n_locations()
        )));
    }
    let tl = Timeline::new(instance);
    let costs = &instance.costs;
    let loc = |l: usize| instance.locations[l].id.clone();
    let mut enumerated = 0u64;
    let mut all_options = Vec::new();
    let mut arenas = Vec::new();

    for vehicle in &instance.vehicles {
        let mut arena: Vec<Label> = Vec::new();
        // (time, location) -> (mask, θ) -> label
        let mut pending = Pending::new();
        let o = vehicle.origin;
        let start = Label {
            cost: costs.vehicle_usage_cost + costs.deadhead_cost(o, o),
            theta: vehicle.initial_params.clone(),
            mask: 0,
            prev: None,
            step: ServiceStep {
                service_kind: ServiceKind::ArtStart,
                id: Some(vehicle.id.clone()),
                from: loc(o),
                to: loc(o),
                depart: 0,
                arrive: 0,
                theta_after: vehicle.initial_params.0.clone(),
                cost: costs.vehicle_usage_cost + costs.deadhead_cost(o, o),
            },
        };
        offer(&mut arena, &mut pending, (0, o), start);

        let mut options: Vec<VehicleOption<usize>> = Vec::new();
        let mut best_end: BTreeMap<(u64, usize), usize> = BTreeMap::new();
        while let Some(((k, l), labels)) = pending.pop_first() {
            let flags = tl.flags(l, k);
            for (_, id) in labels {
                enumerated += 1;
                let here = arena[id].clone();
                let step = |kind, sid: Option<String>, to: usize, arrive: u32, theta: &ParameterPoint, cost: f64| ServiceStep {
                    service_kind: kind,
                    id: sid,
                    from: loc(l),
                    to: loc(to),
                    depart: k,
                    arrive,
                    theta_after: theta.0.clone(),
                    cost,
                };
                let follow = |theta: ParameterPoint, mask: u64, cost: f64, s: ServiceStep| Label {
                    cost: here.cost + cost,
                    theta,
                    mask,
                    prev: Some(id),
                    step: s,
                };
                if flags.end {
                    let key = (here.mask, l);
                    if best_end.get(&key).is_none_or(|&b| arena[b].cost > here.cost) {
                        best_end.insert(key, id);
                    }
                    continue;
                }
                for (t, trip) in instance.trips.iter().enumerate() {
                    if trip.dep_loc != l || trip.dep_time != k || here.mask >> t & 1 == 1 {
                        continue;
                    }
                    let theta = instance.degradations[trip.degradation].apply(&here.theta, &instance.parameter_space);
                    let pf = instance.family.failure_probability(&theta.0, instance.trip_alpha(t))?;
                    let c = trip.base_cost + costs.failure_cost * pf;
                    let s = step(ServiceKind::Trip, Some(trip.id.clone()), trip.arr_loc, trip.arr_time, &theta, c);
                    offer(&mut arena, &mut pending, (trip.arr_time, trip.arr_loc), follow(theta, here.mask | 1 << t, c, s));
                }
                if let Some(next) = tl.next_time(l, k) {
                    let theta = instance.apply_wait(&here.theta);
                    let s = step(ServiceKind::Wait, None, l, next, &theta, 0.0);
                    offer(&mut arena, &mut pending, (next, l), follow(theta, here.mask, 0.0, s));
                }
                if Timeline::is_source(flags) {
                    let kind = if flags.start || flags.departure || flags.arrival {
                        ServiceKind::Deadhead
                    } else {
                        ServiceKind::MaintOut
                    };
                    for l2 in 0..instance.n_locations() {
                        if l2 == l {
                            continue;
                        }
                        if let Some(k2) = tl.deadhead(instance, l, k, l2) {
                            let theta = instance.apply_deadhead(&here.theta);
                            let c = costs.deadhead_cost(l, l2);
                            let s = step(kind, None, l2, k2, &theta, c);
                            offer(&mut arena, &mut pending, (k2, l2), follow(theta, here.mask, c, s));
                        }
                    }
                }
                if flags.departure || flags.arrival {
                    for m in instance.maintenance_locations() {
                        let ws = &instance.locations[m];
                        let done = k as u64 + costs.travel_time[l][m] as u64 + ws.service_duration as u64;
                        if done > instance.horizon as u64 {
                            continue;
                        }
                        let theta = ws.reset_params.clone().expect("workshops have reset parameters");
                        let c = ws.maintenance_cost + costs.deadhead_cost(l, m);
                        let s = step(ServiceKind::MaintIn, None, m, done as u32, &theta, c);
                        offer(&mut arena, &mut pending, (done as u32, m), follow(theta, here.mask, c, s));
                    }
                }
            }
        }
        for ((mask, l), id) in best_end {
            options.push(VehicleOption {
                mask,
                start: o,
                end: l,
                cost: arena[id].cost,
                payload: id,
            });
        }
        all_options.push(options);
        arenas.push(arena);
    }

    let demands: Vec<u32> = instance.trips.iter().map(|t| t.n_vehicles).collect();
    let Some((optimum, picks)) = combine(&all_options, &demands, instance.n_locations(), &mut enumerated) else {
        return Ok(OracleResult {
            optimum: None,
            assignment: None,
            enumerated,
        });
    };
    let mut rotations = Vec::new();
    for (v, pick) in picks.iter().enumerate() {
        let Some(i) = pick else { continue };
        let arena = &arenas[v];
        let last = all_options[v][*i].payload;
        let mut steps = Vec::new();
        let mut cur = Some(last);
        while let Some(id) = cur {
            steps.push(arena[id].step.clone());
            cur = arena[id].prev;
        }
        steps.reverse();
        let end_loc = all_options[v][*i].end;
        let theta = arena[last].theta.0.clone();
        steps.push(ServiceStep {
            service_kind: ServiceKind::ArtEnd,
            id: None,
            from: loc(end_loc),
            to: loc(end_loc),
            depart: tl.end,
            arrive: tl.end,
            theta_after: theta,
            cost: costs.deadhead_cost(end_loc, end_loc),
        });
        rotations.push(steps);
    }
    let plan = RotationPlan {
        objective: rotations.iter().flatten().map(|s| s.cost).sum(),
        rotations,
        lower_bound: None,
    };
    Ok(OracleResult {
        optimum: Some(optimum),
        assignment: Some(Assignment::Rotations(plan)),
        enumerated,
    })
}

/// Exhaustive path enumeration on a built graph.
///
/// Every `art_start` arc is one vehicle; group `g` (the arcs of trip `g`)
/// must be used exactly `demands[g]` times and each location's start marker
/// must send out as many vehicles as its end marker receives.
pub fn enumerate_graph(seeg: &Seeg, demands: &[u32], n_locations: usize) -> Result<OracleResult> {
    if demands.len() > GRAPH_ORACLE_MAX_GROUPS {
        return Err(Error::OracleGuard(format!(
            "{} arc groups (limit {GRAPH_ORACLE_MAX_GROUPS})",
            demands.len()
        )));
    }
    let order = topological_order(seeg)?;
    let mut position = vec![0; seeg.nodes.len()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut enumerated = 0u64;
    let mut all_options = Vec::new();
    for (a0, arc) in seeg.arcs.iter().enumerate() {
        if arc.kind != ServiceKind::ArtStart {
            continue;
        }
        // node -> mask -> (cost, path)
        let mut labels: Vec<BTreeMap<u64, (f64, Vec<usize>)>> = vec![BTreeMap::new(); seeg.nodes.len()];
        labels[arc.head].insert(0, (arc.cost, vec![a0]));
        let mut options = Vec::new();
        for &v in &order[position[arc.head]..] {
            let here = std::mem::take(&mut labels[v]);
            if seeg.nodes[v].kind == NodeKind::ArtificialEnd {
                for (mask, (cost, path)) in here {
                    options.push(VehicleOption {
                        mask,
                        start: seeg.nodes[arc.tail].location,
                        end: seeg.nodes[v].location,
                        cost,
                        payload: path,
                    });
                }
                continue;
            }
            for (mask, (cost, path)) in &here {
                for &a in seeg.out_arcs(v) {
                    let next = &seeg.arcs[a];
                    let mut m = *mask;
                    if let Some(g) = next.trip {
                        if m >> g & 1 == 1 {
                            continue;
                        }
                        m |= 1 << g;
                    }
                    enumerated += 1;
                    let c = cost + next.cost;
                    let slot = &mut labels[next.head];
                    if slot.get(&m).is_none_or(|(old, _)| c < *old) {
                        let mut p = path.clone();
                        p.push(a);
                        slot.insert(m, (c, p));
                    }
                }
            }
        }
        all_options.push(options);
    }
    let result = combine(&all_options, demands, n_locations, &mut enumerated);
    Ok(match result {
        Some((optimum, picks)) => OracleResult {
            optimum: Some(optimum),
            assignment: Some(Assignment::Paths(
                picks
                    .iter()
                    .zip(&all_options)
                    .filter_map(|(p, opts)| p.map(|i| opts[i].payload.clone()))
                    .collect(),
            )),
            enumerated,
        },
        None => OracleResult {
            optimum: None,
            assignment: None,
            enumerated,
        },
    })
}

fn topological_order(seeg: &Seeg) -> Result<Vec<usize>> {
    let n = seeg.nodes.len();
    let mut indeg: Vec<usize> = (0..n).map(|v| seeg.in_arcs(v).len()).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &a in seeg.out_arcs(v) {
            let h = seeg.arcs[a].head;
            indeg[h] -= 1;
            if indeg[h] == 0 {
                ready.insert(h);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Invariant("graph has a cycle".into()));
    }
    Ok(order)
}

/// Weighted exact cover: choose disjoint subsets whose union is X.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactCoverInstance {
    pub n_elements: usize,
    pub subsets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl ExactCoverInstance {
    pub fn new(n_elements: usize, subsets: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if subsets.len() != weights.len() {
            return Err(Error::Invariant("one weight per subset required".into()));
        }
        for (k, y) in subsets.iter().enumerate() {
            if y.is_empty() {
                return Err(Error::Invariant(format!("subset {k} is empty")));
            }
            if let Some(e) = y.iter().find(|&&e| e >= n_elements) {
                return Err(Error::Invariant(format!("subset {k} contains unknown element {e}")));
            }
            let mut sorted = y.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != y.len() {
                return Err(Error::Invariant(format!("subset {k} repeats an element")));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invariant("weights must be finite and nonnegative".into()));
        }
        if n_elements > GRAPH_ORACLE_MAX_GROUPS {
            return Err(Error::Invariant(format!("at most {GRAPH_ORACLE_MAX_GROUPS} elements supported")));
        }
        Ok(ExactCoverInstance {
            n_elements,
            subsets,
            weights,
        })
    }

    fn mask(&self, k: usize) -> u64 {
        self.subsets[k].iter().fold(0, |m, &e| m | 1 << e)
    }
}

/// Minimum-weight exact cover by trying every subcollection.
pub fn brute_force_exact_cover(ec: &ExactCoverInstance) -> Result<OracleResult> {
    let c = ec.subsets.len();
    if c > 24 {
        return Err(Error::OracleGuard(format!("{c} subsets (limit 24)")));
    }
    let full: u64 = if ec.n_elements == 64 { u64::MAX } else { (1 << ec.n_elements) - 1 };
    let masks: Vec<u64> = (0..c).map(|k| ec.mask(k)).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut enumerated = 0;
    for pick in 0u32..(1 << c) {
        enumerated += 1;
        let mut covered = 0u64;
        let mut weight = 0.0;
        let mut ok = true;
        for k in 0..c {
            if pick >> k & 1 == 1 {
                if covered & masks[k] != 0 {
                    ok = false;
                    break;
                }
                covered |= masks[k];
                weight += ec.weights[k];
            }
        }
        if ok && covered == full && best.as_ref().is_none_or(|(w, _)| weight < *w) {
            best = Some((weight, (0..c).filter(|k| pick >> k & 1 == 1).collect()));
        }
    }
    Ok(OracleResult {
        optimum: best.as_ref().map(|b| b.0),
        assignment: best.map(|b| Assignment::Subcollection(b.1)),
        enumerated,
    })
}

/// Graph and arc groups of the path-cover problem equivalent to `ec`.
#[derive(Clone, Debug)]
pub struct EpcpGraph {
    pub seeg: Seeg,
    /// Coverage demand per element (always one).
    pub demands: Vec<u32>,
    pub n_locations: usize,
}

/// Source `s`, sink `t`, and per subset a chain with one arc per element;
/// the chain's arc into `t` carries the subset weight.
pub fn exact_cover_to_epcp(ec: &ExactCoverInstance) -> EpcpGraph {
    let node = |kind, time| Node {
        kind,
        location: 0,
        time,
        slot: None,
        state: None,
        theta: None,
    };
    let longest = ec.subsets.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let mut nodes = vec![node(NodeKind::ArtificialStart, 0), node(NodeKind::ArtificialEnd, longest + 2)];
    let mut arcs = Vec::new();
    let arc = |tail, head, kind, cost, trip, vehicle| Arc {
        tail,
        head,
        kind,
        cost,
        trip,
        vehicle,
    };
    for (k, y) in ec.subsets.iter().enumerate() {
        let first = nodes.len();
        nodes.push(node(NodeKind::Start, 1));
        arcs.push(arc(0, first, ServiceKind::ArtStart, 0.0, None, Some(k)));
        let mut prev = first;
        for (j, &e) in y.iter().enumerate() {
            let kind = if j + 1 == y.len() { NodeKind::End } else { NodeKind::Arrival };
            let v = nodes.len();
            nodes.push(node(kind, j as u32 + 2));
            arcs.push(arc(prev, v, ServiceKind::Trip, 0.0, Some(e), None));
            prev = v;
        }
        arcs.push(arc(prev, 1, ServiceKind::ArtEnd, ec.weights[k], None, None));
    }
    let seeg = Seeg::from_parts(nodes, arcs, ec.n_elements, vec![Some(0)], vec![Some(1)]);
    EpcpGraph {
        seeg,
        demands: vec![1; ec.n_elements],
        n_locations: 1,
    }
}

/// Bound on the rounding error after `steps` services since the last
/// rounding reset: ε(Lˢ⁺¹ − 1)/(L − 1), or (s + 1)ε when L = 1.
pub fn propagation_bound(lipschitz: f64, steps: usize, epsilon: f64) -> f64 {
    if (lipschitz - 1.0).abs() < 1e-12 {
        (steps as f64 + 1.0) * epsilon
    } else {
        (lipschitz.powi(steps as i32 + 1) - 1.0) / (lipschitz - 1.0) * epsilon
    }
}

/// A service applied in a random sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceStep {
    Trip(usize),
    Wait,
    Deadhead,
    Maintenance(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationWitness {
    pub start: Vec<f64>,
    pub steps: Vec<SequenceStep>,
    pub at_step: usize,
    pub exact: Vec<f64>,
    pub rounded: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationReport {
    pub trials: usize,
    pub steps_checked: usize,
    pub epsilon: f64,
    pub lipschitz: f64,
    /// Smallest (bound − measured) over all checked quantities.
    pub min_slack: f64,
    pub violations: usize,
    pub witness: Option<PropagationWitness>,
}

impl PropagationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// A random service sequence of length 1..=`max_len` drawn from the
/// instance's trips, wait, deadhead and workshops.
pub fn random_sequence<R: Rng>(instance: &Instance, max_len: usize, rng: &mut R) -> Vec<SequenceStep> {
    let mut menu: Vec<SequenceStep> = (0..instance.trips.len()).map(SequenceStep::Trip).collect();
    menu.push(SequenceStep::Wait);
    menu.push(SequenceStep::Deadhead);
    menu.extend(instance.maintenance_locations().map(SequenceStep::Maintenance));
    let len = rng.random_range(1..=max_len.max(1));
    (0..len).map(|_| menu.choose(rng).expect("menu is never empty").clone()).collect()
}

struct Walk {
    exact: Vec<ParameterPoint>,
    rounded: Vec<ParameterPoint>,
    /// Services since the last reset, per position.
    since_reset: Vec<usize>,
    /// α and region signs used for the rounding at each position.
    alpha: Vec<Option<f64>>,
}

fn walk(instance: &Instance, rounder: &GridRounder<'_>, start: &ParameterPoint, steps: &[SequenceStep]) -> Result<Walk> {
    let mut exact = start.clone();
    let mut rounded = rounder.theta(rounder.round(start, None)?);
    let mut w = Walk {
        exact: vec![exact.clone()],
        rounded: vec![rounded.clone()],
        since_reset: vec![0],
        alpha: vec![None],
    };
    let mut since = 0;
    for step in steps {
        let alpha = match step {
            SequenceStep::Trip(t) => instance.trip_alpha(*t),
            _ => None,
        };
        let apply = |theta: &ParameterPoint| match step {
            SequenceStep::Trip(t) => instance.apply_trip(*t, theta),
            SequenceStep::Wait => instance.apply_wait(theta),
            SequenceStep::Deadhead => instance.apply_deadhead(theta),
            SequenceStep::Maintenance(m) => instance.locations[*m].reset_params.clone().expect("workshop"),
        };
        exact = apply(&exact);
        rounded = rounder.theta(rounder.round(&apply(&rounded), alpha)?);
        since = if matches!(step, SequenceStep::Maintenance(_)) { 0 } else { since + 1 };
        w.exact.push(exact.clone());
        w.rounded.push(rounded.clone());
        w.since_reset.push(since);
        w.alpha.push(alpha);
    }
    Ok(w)
}

fn unit_distance(instance: &Instance, a: &ParameterPoint, b: &ParameterPoint) -> f64 {
    let s = &instance.parameter_space;
    s.to_unit(a).distance(&s.to_unit(b))
}

fn random_start<R: Rng>(instance: &Instance, rng: &mut R) -> ParameterPoint {
    let s = &instance.parameter_space;
    ParameterPoint(
        s.lower
            .iter()
            .zip(&s.upper)
            .map(|(l, u)| if l < u { rng.random_range(*l..=*u) } else { *l })
            .collect(),
    )
}

/// Measures the distance between exactly propagated and rounded parameters
/// along random service sequences against the geometric error bound, and
/// the failure-probability error against L_P times that bound.
pub fn check_error_propagation<R: Rng>(
    instance: &Instance,
    grid: &Discretization,
    trials: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<PropagationReport> {
    let regions = RegionSet::for_instance(instance);
    let rounder = GridRounder {
        space: &instance.parameter_space,
        grid,
        regions: &regions,
    };
    let eps = grid.epsilon();
    let lip = instance.max_lipschitz();
    let mut lp_cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut lp = |alpha: Option<f64>| {
        *lp_cache
            .entry(alpha.unwrap_or(0.0).to_bits())
            .or_insert_with(|| lipschitz_unit(instance.family, &instance.parameter_space, alpha))
    };
    let mut report = PropagationReport {
        trials,
        steps_checked: 0,
        epsilon: eps,
        lipschitz: lip,
        min_slack: f64::INFINITY,
        violations: 0,
        witness: None,
    };
    for _ in 0..trials {
        let start = random_start(instance, rng);
        let steps = random_sequence(instance, max_len, rng);
        let w = walk(instance, &rounder, &start, &steps)?;
        for j in 0..w.exact.len() {
            report.steps_checked += 1;
            let bound = propagation_bound(lip, w.since_reset[j], eps);
            let err = unit_distance(instance, &w.exact[j], &w.rounded[j]);
            let mut slack = bound - err;
            if let (Some(alpha), true) = (w.alpha[j], j > 0) {
                let pe = instance.family.failure_probability(&w.exact[j].0, Some(alpha))?;
                let pr = instance.family.failure_probability(&w.rounded[j].0, Some(alpha))?;
                slack = slack.min(lp(Some(alpha)) * bound - (pe - pr).abs());
            } else if !instance.family.is_reliability() {
                let pe = instance.family.failure_probability(&w.exact[j].0, None)?;
                let pr = instance.family.failure_probability(&w.rounded[j].0, None)?;
                slack = slack.min(lp(None) * bound - (pe - pr).abs());
            }
            report.min_slack = report.min_slack.min(slack);
            if slack < -1e-12 {
                report.violations += 1;
                report.witness.get_or_insert_with(|| PropagationWitness {
                    start: start.0.clone(),
                    steps: steps.clone(),
                    at_step: j,
                    exact: w.exact[j].0.clone(),
                    rounded: w.rounded[j].0.clone(),
                });
            }
        }
    }
    Ok(report)
}

/// Checks along random sequences that the rounded parameters stay on the
/// healthy side of the exact ones (componentwise, in the rounding
/// direction) and never have a larger failure probability.
pub fn check_underestimation<R: Rng>(
    instance: &Instance,
    grid: &Discretization,
    trials: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<PropagationReport> {
    let regions = RegionSet::for_instance(instance);
    let rounder = GridRounder {
        space: &instance.parameter_space,
        grid,
        regions: &regions,
    };
    let alphas: Vec<Option<f64>> = if instance.family.is_reliability() {
        instance.alpha_set().into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut report = PropagationReport {
        trials,
        steps_checked: 0,
        epsilon: grid.epsilon(),
        lipschitz: instance.max_lipschitz(),
        min_slack: f64::INFINITY,
        violations: 0,
        witness: None,
    };
    for _ in 0..trials {
        let start = random_start(instance, rng);
        let steps = random_sequence(instance, max_len, rng);
        let w = walk(instance, &rounder, &start, &steps)?;
        for j in 0..w.exact.len() {
            report.steps_checked += 1;
            let signs = &regions.region_of(&w.exact[j].0, w.alpha[j]).signs;
            let mut slack = w.exact[j]
                .0
                .iter()
                .zip(&w.rounded[j].0)
                .zip(signs)
                .map(|((e, r), s)| f64::from(*s) * (e - r))
                .fold(f64::INFINITY, f64::min);
            for alpha in &alphas {
                let pe = instance.family.failure_probability(&w.exact[j].0, *alpha)?;
                let pr = instance.family.failure_probability(&w.rounded[j].0, *alpha)?;
                slack = slack.min(pe - pr);
            }
            report.min_slack = report.min_slack.min(slack);
            if slack < -ORDER_TOL {
                report.violations += 1;
                report.witness.get_or_insert_with(|| PropagationWitness {
                    start: start.0.clone(),
                    steps: steps.clone(),
                    at_step: j,
                    exact: w.exact[j].0.clone(),
                    rounded: w.rounded[j].0.clone(),
                });
            }
        }
    }
    Ok(report)
}

/// Upper bound on how far the repropagated cost of `plan` can exceed its
/// cost with rounded parameters at discretization accuracy `epsilon`.
pub fn plan_gap_bound(plan: &RotationPlan, instance: &Instance, epsilon: f64) -> f64 {
    let lip = instance.max_lipschitz();
    let mut total = 0.0;
    for rotation in &plan.rotations {
        let mut since = 0;
        for step in rotation {
            match step.service_kind {
                ServiceKind::ArtStart | ServiceKind::ArtEnd => {}
                ServiceKind::MaintIn => since = 0,
                ServiceKind::Trip => {
                    since += 1;
                    let alpha = step
                        .id
                        .as_deref()
                        .and_then(|id| instance.trip_index(id))
                        .and_then(|t| instance.trip_alpha(t));
                    let lp = lipschitz_unit(instance.family, &instance.parameter_space, alpha);
                    total += instance.costs.failure_cost * lp * propagation_bound(lip, since, epsilon);
                }
                ServiceKind::Wait | ServiceKind::Deadhead | ServiceKind::MaintOut => since += 1,
            }
        }
    }
    total
}
