//! State-expanded event-graphs.
//!
//! Nodes are (slot, parameter state) pairs plus artificial start and end
//! markers. The same builder serves the discretized graph, where every
//! degraded parameter is rounded onto a grid, and the completely expanded
//! graph, whose state set holds every exactly reachable parameter.

mod ceeg;
mod dot;
pub mod skeleton;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

pub use self::ceeg::{build_ceeg, ceeg_states, DEFAULT_CEEG_CAP};
pub use self::dot::{export_dot, to_dot};
pub use self::skeleton::{Skeleton, Slot, SlotId};

use crate::discretization::{Discretization, GridRounder, StateId};
use crate::error::Result;
use crate::health::RegionSet;
use crate::instance::{Instance, ParameterPoint, ServiceKind};

pub type NodeId = usize;
pub type ArcId = usize;
pub type ArcKind = ServiceKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    Departure,
    Arrival,
    Maintenance,
    End,
    ArtificialStart,
    ArtificialEnd,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::Departure => "departure",
            NodeKind::Arrival => "arrival",
            NodeKind::Maintenance => "maintenance",
            NodeKind::End => "end",
            NodeKind::ArtificialStart => "artificial_start",
            NodeKind::ArtificialEnd => "artificial_end",
        }
    }

    pub fn is_artificial(self) -> bool {
        matches!(self, NodeKind::ArtificialStart | NodeKind::ArtificialEnd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Node {
    pub kind: NodeKind,
    pub location: usize,
    pub time: u32,
    pub slot: Option<SlotId>,
    pub state: Option<StateId>,
    pub theta: Option<ParameterPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub kind: ArcKind,
    pub cost: f64,
    pub trip: Option<usize>,
    pub vehicle: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GraphStats {
    /// Size of the parameter state set.
    pub states: usize,
    pub nodes: usize,
    pub arcs: usize,
    pub nodes_before_pruning: usize,
    pub arcs_before_pruning: usize,
    pub nodes_by_kind: BTreeMap<&'static str, usize>,
    pub arcs_by_kind: BTreeMap<&'static str, usize>,
    /// |A(t)| per trip before pruning.
    pub trip_arcs_before_pruning: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Seeg {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    #[serde(skip)]
    out_arcs: Vec<Vec<ArcId>>,
    #[serde(skip)]
    in_arcs: Vec<Vec<ArcId>>,
    #[serde(skip)]
    trip_arcs: Vec<Vec<ArcId>>,
    /// Artificial start marker per location (locations without vehicles have none).
    pub start_markers: Vec<Option<NodeId>>,
    pub end_markers: Vec<Option<NodeId>>,
    pub stats: GraphStats,
}

impl Seeg {
    pub fn out_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.out_arcs[v]
    }

    pub fn in_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.in_arcs[v]
    }

    /// A(t): the arcs representing trip `t`.
    pub fn arcs_of_trip(&self, t: usize) -> &[ArcId] {
        self.trip_arcs.get(t).map_or(&[], Vec::as_slice)
    }

    pub fn n_trips(&self) -> usize {
        self.trip_arcs.len()
    }

    /// V(l, k): the non-artificial nodes of an event.
    pub fn nodes_at(&self, location: usize, time: u32) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&v| {
                let n = &self.nodes[v];
                !n.kind.is_artificial() && n.location == location && n.time == time
            })
            .collect()
    }

    /// Assembles a graph from explicit node and arc lists (used for
    /// reductions that are not built from an instance).
    pub fn from_parts(
        nodes: Vec<Node>,
        arcs: Vec<Arc>,
        n_trips: usize,
        start_markers: Vec<Option<NodeId>>,
        end_markers: Vec<Option<NodeId>>,
    ) -> Self {
        let mut g = Seeg {
            nodes,
            arcs,
            start_markers,
            end_markers,
            ..Seeg::default()
        };
        g.index(n_trips);
        g.stats = g.count_stats(0);
        g.stats.nodes_before_pruning = g.nodes.len();
        g.stats.arcs_before_pruning = g.arcs.len();
        g.stats.trip_arcs_before_pruning = g.trip_arcs.iter().map(Vec::len).collect();
        g
    }

    fn index(&mut self, n_trips: usize) {
        self.out_arcs = vec![Vec::new(); self.nodes.len()];
        self.in_arcs = vec![Vec::new(); self.nodes.len()];
        self.trip_arcs = vec![Vec::new(); n_trips];
        for (a, arc) in self.arcs.iter().enumerate() {
            self.out_arcs[arc.tail].push(a);
            self.in_arcs[arc.head].push(a);
            if let Some(t) = arc.trip {
                self.trip_arcs[t].push(a);
            }
        }
    }

    fn count_stats(&self, states: usize) -> GraphStats {
        let mut s = GraphStats {
            states,
            nodes: self.nodes.len(),
            arcs: self.arcs.len(),
            ..GraphStats::default()
        };
        for n in &self.nodes {
            *s.nodes_by_kind.entry(n.kind.as_str()).or_default() += 1;
        }
        for a in &self.arcs {
            *s.arcs_by_kind.entry(a.kind.as_str()).or_default() += 1;
        }
        s
    }
}

/// Parameter states of a graph and the rounding used on arc heads.
pub(crate) trait StateSpace {
    fn len(&self) -> usize;
    fn theta(&self, id: StateId) -> ParameterPoint;
    /// Maps a degraded parameter onto a state; `None` drops the arc.
    fn round(&self, theta: &ParameterPoint, alpha: Option<f64>) -> Result<Option<StateId>>;
}

struct GridStates<'a> {
    rounder: GridRounder<'a>,
    thetas: Vec<ParameterPoint>,
}

impl StateSpace for GridStates<'_> {
    fn len(&self) -> usize {
        self.thetas.len()
    }

    fn theta(&self, id: StateId) -> ParameterPoint {
        self.thetas[id].clone()
    }

    fn round(&self, theta: &ParameterPoint, alpha: Option<f64>) -> Result<Option<StateId>> {
        self.rounder.round(theta, alpha).map(Some)
    }
}

/// Builds the SEEG of `instance` over the discretization `grid`.
pub fn build_seeg(instance: &Instance, grid: &Discretization) -> Result<Seeg> {
    let regions = RegionSet::for_instance(instance);
    let rounder = GridRounder {
        space: &instance.parameter_space,
        grid,
        regions: &regions,
    };
    let thetas = (0..grid.len()).map(|id| rounder.theta(id)).collect();
    let states = GridStates { rounder, thetas };
    build_graph(instance, &states)
}

struct Builder<'a, S: StateSpace> {
    instance: &'a Instance,
    states: &'a S,
    skeleton: Skeleton,
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    slot_nodes: Vec<Vec<NodeId>>,
    node_at: HashMap<(SlotId, StateId), NodeId>,
    thetas: Vec<ParameterPoint>,
}

impl<S: StateSpace> Builder<'_, S> {
    fn slot_kind(slot: &Slot) -> NodeKind {
        if slot.start {
            NodeKind::Start
        } else if slot.end {
            NodeKind::End
        } else if slot.departure {
            NodeKind::Departure
        } else if slot.arrival {
            NodeKind::Arrival
        } else {
            NodeKind::Maintenance
        }
    }

    fn node(&mut self, slot: SlotId, state: StateId) -> NodeId {
        if let Some(&v) = self.node_at.get(&(slot, state)) {
            return v;
        }
        let s = &self.skeleton.slots[slot];
        let v = self.nodes.len();
        self.nodes.push(Node {
            kind: Self::slot_kind(s),
            location: s.location,
            time: s.time,
            slot: Some(slot),
            state: Some(state),
            theta: Some(self.thetas[state].clone()),
        });
        self.slot_nodes[slot].push(v);
        self.node_at.insert((slot, state), v);
        v
    }

    fn marker(&mut self, kind: NodeKind, location: usize, time: u32) -> NodeId {
        self.nodes.push(Node {
            kind,
            location,
            time,
            slot: None,
            state: None,
            theta: None,
        });
        self.nodes.len() - 1
    }

    fn arc(&mut self, tail: NodeId, head: NodeId, kind: ArcKind, cost: f64, trip: Option<usize>, vehicle: Option<usize>) {
        self.arcs.push(Arc {
            tail,
            head,
            kind,
            cost,
            trip,
            vehicle,
        });
    }

    fn theta_of(&self, v: NodeId) -> &ParameterPoint {
        self.nodes[v].theta.as_ref().expect("event nodes carry parameters")
    }

    fn build(&mut self) -> Result<()> {
        let inst = self.instance;
        let costs = &inst.costs;

        for slot in 0..self.skeleton.slots.len() {
            if self.skeleton.slots[slot].is_full() {
                for state in 0..self.states.len() {
                    self.node(slot, state);
                }
            }
        }

        let mut reset_state = vec![None; inst.n_locations()];
        for m in inst.maintenance_locations() {
            let theta_m = inst.locations[m].reset_params.as_ref().expect("workshops have reset parameters");
            reset_state[m] = self.states.round(theta_m, None)?;
        }
        let links = self.skeleton.maintenance.clone();
        for link in &links {
            if let Some(state) = reset_state[link.workshop] {
                self.node(link.to, state);
            }
        }

        for (t, trip) in inst.trips.iter().enumerate() {
            let (dep, arr) = self.skeleton.trip_slots[t];
            let alpha = inst.trip_alpha(t);
            for v in self.slot_nodes[dep].clone() {
                let next = inst.apply_trip(t, self.theta_of(v));
                let Some(state) = self.states.round(&next, alpha)? else {
                    continue;
                };
                let head = self.node(arr, state);
                let pf = inst.family.pf(&self.thetas[state].0, alpha.unwrap_or(0.0));
                let cost = trip.base_cost + costs.failure_cost * pf;
                self.arc(v, head, ArcKind::Trip, cost, Some(t), None);
            }
        }
        for link in &links {
            let Some(state) = reset_state[link.workshop] else {
                continue;
            };
            let l = self.skeleton.slots[link.from].location;
            let cost = inst.locations[link.workshop].maintenance_cost + costs.deadhead_cost(l, link.workshop);
            let head = self.node(link.to, state);
            for v in self.slot_nodes[link.from].clone() {
                self.arc(v, head, ArcKind::MaintIn, cost, None, None);
            }
        }

        for l in 0..inst.n_locations() {
            for slot in self.skeleton.by_location[l].clone() {
                let Some(next) = self.skeleton.next_wait[slot] else {
                    continue;
                };
                for v in self.slot_nodes[slot].clone() {
                    let theta = inst.apply_wait(self.theta_of(v));
                    let Some(state) = self.states.round(&theta, None)? else {
                        continue;
                    };
                    let head = self.node(next, state);
                    self.arc(v, head, ArcKind::Wait, 0.0, None, None);
                }
            }
        }

        for (s1, s2) in self.skeleton.deadheads.clone() {
            let (l1, l2) = (self.skeleton.slots[s1].location, self.skeleton.slots[s2].location);
            let cost = costs.deadhead_cost(l1, l2);
            for v in self.slot_nodes[s1].clone() {
                let theta = inst.apply_deadhead(self.theta_of(v));
                let Some(state) = self.states.round(&theta, None)? else {
                    continue;
                };
                let head = self.node(s2, state);
                let kind = if self.nodes[v].kind == NodeKind::Maintenance {
                    ArcKind::MaintOut
                } else {
                    ArcKind::Deadhead
                };
                self.arc(v, head, kind, cost, None, None);
            }
        }
        Ok(())
    }

    fn add_artificial(&mut self) -> Result<(Vec<Option<NodeId>>, Vec<Option<NodeId>>)> {
        let inst = self.instance;
        let nl = inst.n_locations();
        let mut start_markers = vec![None; nl];
        for v in &inst.vehicles {
            if start_markers[v.origin].is_none() {
                start_markers[v.origin] = Some(usize::MAX);
            }
        }
        for (l, m) in start_markers.iter_mut().enumerate() {
            if m.is_some() {
                *m = Some(self.marker(NodeKind::ArtificialStart, l, 0));
            }
        }
        for (i, veh) in inst.vehicles.iter().enumerate() {
            let Some(state) = self.states.round(&veh.initial_params, None)? else {
                continue;
            };
            let head = self.node(self.skeleton.start_slot[veh.origin], state);
            let cost = inst.costs.vehicle_usage_cost + inst.costs.deadhead_cost(veh.origin, veh.origin);
            self.arc(start_markers[veh.origin].expect("origin marker"), head, ArcKind::ArtStart, cost, None, Some(i));
        }
        let mut end_markers = vec![None; nl];
        for (l, marker) in end_markers.iter_mut().enumerate() {
            let m = self.marker(NodeKind::ArtificialEnd, l, inst.end_time());
            *marker = Some(m);
            let cost = inst.costs.deadhead_cost(l, l);
            for v in self.slot_nodes[self.skeleton.end_slot[l]].clone() {
                self.arc(v, m, ArcKind::ArtEnd, cost, None, None);
            }
        }
        Ok((start_markers, end_markers))
    }
}

pub(crate) fn build_graph<S: StateSpace>(instance: &Instance, states: &S) -> Result<Seeg> {
    let skeleton = Skeleton::new(instance);
    let n_slots = skeleton.slots.len();
    let mut b = Builder {
        instance,
        states,
        skeleton,
        nodes: Vec::new(),
        arcs: Vec::new(),
        slot_nodes: vec![Vec::new(); n_slots],
        node_at: HashMap::new(),
        thetas: (0..states.len()).map(|s| states.theta(s)).collect(),
    };
    b.build()?;
    let (start_markers, end_markers) = b.add_artificial()?;

    let nodes_before = b.nodes.len();
    let arcs_before = b.arcs.len();
    let mut trip_before = vec![0usize; instance.trips.len()];
    for a in &b.arcs {
        if let Some(t) = a.trip {
            trip_before[t] += 1;
        }
    }

    let (node_alive, arc_alive) = prune(&b.nodes, &b.arcs);
    let mut remap = vec![usize::MAX; b.nodes.len()];
    let mut nodes = Vec::new();
    for (v, node) in b.nodes.into_iter().enumerate() {
        if node_alive[v] {
            remap[v] = nodes.len();
            nodes.push(node);
        }
    }
    let arcs: Vec<Arc> = b
        .arcs
        .into_iter()
        .zip(&arc_alive)
        .filter(|(_, alive)| **alive)
        .map(|(mut a, _)| {
            a.tail = remap[a.tail];
            a.head = remap[a.head];
            a
        })
        .collect();
    let fix = |m: Vec<Option<NodeId>>| m.into_iter().map(|x| x.map(|v| remap[v])).collect();

    let mut g = Seeg {
        nodes,
        arcs,
        start_markers: fix(start_markers),
        end_markers: fix(end_markers),
        ..Seeg::default()
    };
    g.index(instance.trips.len());
    g.stats = g.count_stats(states.len());
    g.stats.nodes_before_pruning = nodes_before;
    g.stats.arcs_before_pruning = arcs_before;
    g.stats.trip_arcs_before_pruning = trip_before;
    Ok(g)
}

/// Repeatedly removes non-artificial nodes with in- or outdegree zero.
fn prune(nodes: &[Node], arcs: &[Arc]) -> (Vec<bool>, Vec<bool>) {
    let n = nodes.len();
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    let mut out_adj = vec![Vec::new(); n];
    let mut in_adj = vec![Vec::new(); n];
    for (a, arc) in arcs.iter().enumerate() {
        outdeg[arc.tail] += 1;
        indeg[arc.head] += 1;
        out_adj[arc.tail].push(a);
        in_adj[arc.head].push(a);
    }
    let mut node_alive = vec![true; n];
    let mut arc_alive = vec![true; arcs.len()];
    let removable = |v: usize, indeg: &[usize], outdeg: &[usize]| {
        !nodes[v].kind.is_artificial() && (indeg[v] == 0 || outdeg[v] == 0)
    };
    let mut stack: Vec<usize> = (0..n).filter(|&v| removable(v, &indeg, &outdeg)).collect();
    while let Some(v) = stack.pop() {
        if !node_alive[v] {
            continue;
        }
        node_alive[v] = false;
        for &a in out_adj[v].iter().chain(&in_adj[v]) {
            if !arc_alive[a] {
                continue;
            }
            arc_alive[a] = false;
            let (t, h) = (arcs[a].tail, arcs[a].head);
            outdeg[t] -= 1;
            indeg[h] -= 1;
            for w in [t, h] {
                if w != v && node_alive[w] && removable(w, &indeg, &outdeg) {
                    stack.push(w);
                }
            }
        }
    }
    (node_alive, arc_alive)
}
