//! The arc-flow integer program over an event-graph and its solution.
//!
//! One variable per arc. Rows: coverage of every trip with its demand,
//! flow conservation at every non-artificial node, and balance between the
//! vehicles leaving and returning to each location.

mod backend;
mod lp;

use serde::Serialize;

pub use self::backend::{backend_by_name, available_backends, MicroLpBackend, SolverBackend, DEFAULT_BACKEND};
#[cfg(feature = "highs")]
pub use self::backend::HighsBackend;
pub use self::lp::{export_lp, to_lp_string};

use crate::error::{Error, Result};
use crate::graph::{ArcKind, NodeKind, Seeg};
use crate::instance::{Instance, RotationPlan, ServiceStep};

/// Models with at most this many columns count as tiny for gap purposes.
pub const TINY_MODEL_COLUMNS: usize = 5_000;
/// Distance from an integer below which an ILP value is taken as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Coverage(usize),
    Conservation(usize),
    Balance(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub kind: RowKind,
    pub rhs: f64,
    /// (column, coefficient), sorted by column.
    pub entries: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub cost: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowModel {
    /// One column per graph arc, in arc order.
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    /// Some trip has no arc at all.
    pub trivially_infeasible: bool,
}

impl FlowModel {
    pub fn build(seeg: &Seeg, instance: &Instance) -> Self {
        let demands: Vec<u32> = instance.trips.iter().map(|t| t.n_vehicles).collect();
        Self::with_demands(seeg, &demands, instance.n_locations(), instance.vehicles.len() as f64)
    }

    /// Builds the model of an arbitrary graph: `demands[t]` is the coverage
    /// right-hand side of arc group `t` and `fleet` bounds every flow.
    pub fn with_demands(seeg: &Seeg, demands: &[u32], n_locations: usize, fleet: f64) -> Self {
        let columns = seeg
            .arcs
            .iter()
            .map(|a| {
                let binary = a.kind == ArcKind::ArtStart;
                Column {
                    cost: a.cost,
                    upper: if binary { 1.0 } else { fleet },
                    binary,
                }
            })
            .collect();
        let mut rows = Vec::new();
        let mut trivially_infeasible = false;
        for (t, &demand) in demands.iter().enumerate() {
            let arcs = seeg.arcs_of_trip(t);
            trivially_infeasible |= arcs.is_empty() && demand > 0;
            rows.push(Row {
                kind: RowKind::Coverage(t),
                rhs: f64::from(demand),
                entries: arcs.iter().map(|&a| (a, 1.0)).collect(),
            });
        }
        for (v, node) in seeg.nodes.iter().enumerate() {
            if node.kind.is_artificial() {
                continue;
            }
            let mut entries: Vec<(usize, f64)> = seeg
                .in_arcs(v)
                .iter()
                .map(|&a| (a, 1.0))
                .chain(seeg.out_arcs(v).iter().map(|&a| (a, -1.0)))
                .collect();
            entries.sort_by_key(|e| e.0);
            rows.push(Row {
                kind: RowKind::Conservation(v),
                rhs: 0.0,
                entries,
            });
        }
        for l in 0..n_locations {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            if let Some(m) = seeg.start_markers.get(l).copied().flatten() {
                entries.extend(seeg.out_arcs(m).iter().map(|&a| (a, 1.0)));
            }
            if let Some(m) = seeg.end_markers.get(l).copied().flatten() {
                entries.extend(seeg.in_arcs(m).iter().map(|&a| (a, -1.0)));
            }
            entries.sort_by_key(|e| e.0);
            rows.push(Row {
                kind: RowKind::Balance(l),
                rhs: 0.0,
                entries,
            });
        }
        FlowModel {
            columns,
            rows,
            trivially_infeasible,
        }
    }

    pub fn objective_of(&self, values: &[f64]) -> f64 {
        self.columns.iter().zip(values).map(|(c, x)| c.cost * x).sum()
    }

    /// Largest absolute row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let lhs: f64 = r.entries.iter().map(|(c, a)| a * values[*c]).sum();
                (lhs - r.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_tiny(&self) -> bool {
        self.columns.len() <= TINY_MODEL_COLUMNS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapTolerance {
    pub absolute: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Seconds.
    pub time_limit: Option<f64>,
    pub seed: u64,
    pub gap: GapTolerance,
}

impl SolveOptions {
    /// 1e-9 absolute gap on tiny models, 1e-6 relative otherwise.
    pub fn for_model(model: &FlowModel) -> Self {
        let gap = if model.is_tiny() {
            GapTolerance {
                absolute: 1e-9,
                relative: 0.0,
            }
        } else {
            GapTolerance {
                absolute: 1e-9,
                relative: 1e-6,
            }
        };
        SolveOptions {
            time_limit: None,
            seed: 0,
            gap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowSolution {
    pub status: SolveStatus,
    /// Objective of the returned values, if any.
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum, if any.
    pub bound: Option<f64>,
    pub values: Vec<f64>,
    pub relaxed: bool,
}

impl FlowSolution {
    fn infeasible(relaxed: bool) -> Self {
        FlowSolution {
            status: SolveStatus::Infeasible,
            objective: None,
            bound: None,
            values: Vec::new(),
            relaxed,
        }
    }
}

/// Solves the model (or its LP relaxation) with `backend`.
pub fn solve(
    model: &FlowModel,
    backend: &dyn SolverBackend,
    relaxed: bool,
    options: &SolveOptions,
) -> Result<FlowSolution> {
    if model.trivially_infeasible {
        return Ok(FlowSolution::infeasible(relaxed));
    }
    if model.columns.is_empty() {
        if model.rows.iter().any(|r| r.rhs != 0.0) {
            return Ok(FlowSolution::infeasible(relaxed));
        }
        return Ok(FlowSolution {
            status: SolveStatus::Optimal,
            objective: Some(0.0),
            bound: Some(0.0),
            values: Vec::new(),
            relaxed,
        });
    }
    let mut sol = backend.solve(model, relaxed, options)?;
    if !relaxed && !sol.values.is_empty() {
        for x in &mut sol.values {
            let r = x.round();
            if (r - *x).abs() <= INTEGRALITY_TOL {
                *x = r;
            }
        }
        let obj = model.objective_of(&sol.values);
        sol.objective = Some(obj);
        if sol.status == SolveStatus::Optimal {
            sol.bound = Some(sol.bound.map_or(obj, |b| b.min(obj)));
        }
    }
    Ok(sol)
}

/// Decomposes an integral flow into vehicle rotations.
///
/// Each unit of flow leaving an `art_start` arc is followed greedily along
/// the outgoing arc with the earliest head time (lowest arc id on ties)
/// until it reaches an end marker.
pub fn extract_rotations(solution: &FlowSolution, seeg: &Seeg, instance: &Instance) -> Result<RotationPlan> {
    if solution.relaxed {
        return Err(Error::Decomposition("cannot decompose a relaxed solution".into()));
    }
    if solution.values.is_empty() && seeg.arcs.is_empty() {
        return Ok(RotationPlan::empty());
    }
    if solution.values.len() != seeg.arcs.len() {
        return Err(Error::Decomposition(format!(
            "{} values for {} arcs",
            solution.values.len(),
            seeg.arcs.len()
        )));
    }
    let mut remaining = Vec::with_capacity(solution.values.len());
    for (a, &x) in solution.values.iter().enumerate() {
        let r = x.round();
        if (x - r).abs() > INTEGRALITY_TOL || r < 0.0 {
            return Err(Error::Decomposition(format!("arc {a} carries fractional flow {x}")));
        }
        remaining.push(r as u64);
    }

    let mut rotations = Vec::new();
    for (a0, arc) in seeg.arcs.iter().enumerate() {
        if arc.kind != ArcKind::ArtStart || remaining[a0] == 0 {
            continue;
        }
        if remaining[a0] > 1 {
            return Err(Error::Decomposition(format!("vehicle start arc {a0} used {} times", remaining[a0])));
        }
        remaining[a0] = 0;
        let mut path = vec![a0];
        let mut cur = arc.head;
        while seeg.nodes[cur].kind != NodeKind::ArtificialEnd {
            let next = seeg
                .out_arcs(cur)
                .iter()
                .copied()
                .filter(|&a| remaining[a] > 0)
                .min_by_key(|&a| (seeg.nodes[seeg.arcs[a].head].time, a))
                .ok_or_else(|| Error::Decomposition(format!("flow stops at node {cur}")))?;
            remaining[next] -= 1;
            path.push(next);
            cur = seeg.arcs[next].head;
        }
        rotations.push(path_steps(&path, seeg, instance));
    }
    if let Some(a) = remaining.iter().position(|r| *r > 0) {
        return Err(Error::Decomposition(format!("arc {a} carries flow not reached from any vehicle start")));
    }
    let objective = rotations.iter().flatten().map(|s: &ServiceStep| s.cost).sum();
    Ok(RotationPlan {
        rotations,
        objective,
        lower_bound: None,
    })
}

fn path_steps(path: &[usize], seeg: &Seeg, instance: &Instance) -> Vec<ServiceStep> {
    path.iter()
        .map(|&a| {
            let arc = &seeg.arcs[a];
            let tail = &seeg.nodes[arc.tail];
            let head = &seeg.nodes[arc.head];
            let id = match (arc.trip, arc.vehicle) {
                (Some(t), _) => Some(instance.trips[t].id.clone()),
                (None, Some(v)) => Some(instance.vehicles[v].id.clone()),
                _ => None,
            };
            let theta = head.theta.as_ref().or(tail.theta.as_ref()).map(|p| p.0.clone()).unwrap_or_default();
            ServiceStep {
                service_kind: arc.kind,
                id,
                from: instance.locations[tail.location].id.clone(),
                to: instance.locations[head.location].id.clone(),
                depart: tail.time,
                arrive: head.time,
                theta_after: theta,
                cost: arc.cost,
            }
        })
        .collect()
}
