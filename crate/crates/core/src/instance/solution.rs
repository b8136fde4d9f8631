use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Instance;
use crate::error::{Error, Result};

/// Relative tolerance when re-summing step costs against the stated objective.
const OBJECTIVE_TOL: f64 = 1e-6;

/// What a vehicle does during one step of its rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Trip,
    Wait,
    Deadhead,
    MaintIn,
    MaintOut,
    ArtStart,
    ArtEnd,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 7] = [
        ServiceKind::Trip,
        ServiceKind::Wait,
        ServiceKind::Deadhead,
        ServiceKind::MaintIn,
        ServiceKind::MaintOut,
        ServiceKind::ArtStart,
        ServiceKind::ArtEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Trip => "trip",
            ServiceKind::Wait => "wait",
            ServiceKind::Deadhead => "deadhead",
            ServiceKind::MaintIn => "maint_in",
            ServiceKind::MaintOut => "maint_out",
            ServiceKind::ArtStart => "art_start",
            ServiceKind::ArtEnd => "art_end",
        }
    }

    pub fn is_artificial(self) -> bool {
        matches!(self, ServiceKind::ArtStart | ServiceKind::ArtEnd)
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceStep {
    pub service_kind: ServiceKind,
    /// Trip id for trips, vehicle id for the starting step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    pub depart: u32,
    pub arrive: u32,
    pub theta_after: Vec<f64>,
    pub cost: f64,
}

/// A set of vehicle rotations, each an ordered list of steps from an
/// `art_start` step to an `art_end` step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RotationPlan {
    pub rotations: Vec<Vec<ServiceStep>>,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
}

impl RotationPlan {
    pub fn empty() -> Self {
        RotationPlan::default()
    }

    /// Sum of all step costs.
    pub fn total_cost(&self) -> f64 {
        self.rotations.iter().flatten().map(|s| s.cost).sum()
    }

    pub fn vehicle_of(rotation: &[ServiceStep]) -> Option<&str> {
        rotation
            .first()
            .filter(|s| s.service_kind == ServiceKind::ArtStart)
            .and_then(|s| s.id.as_deref())
    }

    /// Checks the plan against `instance`: known references, time and
    /// location continuity, exact trip coverage, balancedness per location
    /// and agreement of the objective with the step costs.
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let n = instance.dim();
        let mut used_vehicles = vec![false; instance.vehicles.len()];
        let mut coverage = vec![0u32; instance.trips.len()];
        let mut balance: BTreeMap<usize, i64> = BTreeMap::new();

        for (r, rotation) in self.rotations.iter().enumerate() {
            let fail = |msg: String| Error::Validation(format!("rotation {r}: {msg}"));
            let first = rotation.first().ok_or_else(|| fail("empty rotation".into()))?;
            let last = rotation.last().expect("nonempty");
            if first.service_kind != ServiceKind::ArtStart {
                return Err(fail("must begin with an art_start step".into()));
            }
            if last.service_kind != ServiceKind::ArtEnd || rotation.len() < 2 {
                return Err(fail("must end with an art_end step".into()));
            }
            let vid = first
                .id
                .as_deref()
                .ok_or_else(|| fail("art_start step lacks a vehicle id".into()))?;
            let v = instance.vehicle_index(vid).ok_or_else(|| Error::UnknownReference {
                kind: "vehicle",
                id: vid.to_string(),
            })?;
            if std::mem::replace(&mut used_vehicles[v], true) {
                return Err(fail(format!("vehicle `{vid}` used by more than one rotation")));
            }

            let mut prev: Option<&ServiceStep> = None;
            for (s, step) in rotation.iter().enumerate() {
                let fail = |msg: String| Error::Validation(format!("rotation {r} step {s}: {msg}"));
                let from = location(instance, &step.from)?;
                let to = location(instance, &step.to)?;
                if step.theta_after.len() != n || step.theta_after.iter().any(|x| !x.is_finite()) {
                    return Err(fail(format!("theta_after must hold {n} finite values")));
                }
                if !step.cost.is_finite() {
                    return Err(fail("cost is not finite".into()));
                }
                if step.depart > step.arrive {
                    return Err(fail("depart is after arrive".into()));
                }
                if let Some(p) = prev {
                    if p.to != step.from {
                        return Err(fail(format!("starts at `{}` but previous step ended at `{}`", step.from, p.to)));
                    }
                    if step.depart < p.arrive {
                        return Err(fail("departs before the previous step arrives".into()));
                    }
                }
                match step.service_kind {
                    ServiceKind::ArtStart => {
                        if s != 0 {
                            return Err(fail("art_start only allowed as first step".into()));
                        }
                        if from != instance.vehicles[v].origin || to != from {
                            return Err(fail(format!("vehicle `{vid}` must start at its origin")));
                        }
                        *balance.entry(from).or_default() += 1;
                    }
                    ServiceKind::ArtEnd => {
                        if s + 1 != rotation.len() {
                            return Err(fail("art_end only allowed as last step".into()));
                        }
                        *balance.entry(to).or_default() -= 1;
                    }
                    ServiceKind::Trip => {
                        let id = step.id.as_deref().ok_or_else(|| fail("trip step lacks an id".into()))?;
                        let t = instance.trip_index(id).ok_or_else(|| Error::UnknownReference {
                            kind: "trip",
                            id: id.to_string(),
                        })?;
                        let trip = &instance.trips[t];
                        if trip.dep_loc != from
                            || trip.arr_loc != to
                            || trip.dep_time != step.depart
                            || trip.arr_time != step.arrive
                        {
                            return Err(fail(format!("step does not match the timetable entry of trip `{id}`")));
                        }
                        coverage[t] += 1;
                    }
                    ServiceKind::Wait => {
                        if from != to {
                            return Err(fail("wait must stay at one location".into()));
                        }
                    }
                    ServiceKind::MaintIn => {
                        if !instance.locations[to].is_maintenance {
                            return Err(fail(format!("`{}` is not a maintenance location", step.to)));
                        }
                    }
                    ServiceKind::MaintOut => {
                        if !instance.locations[from].is_maintenance {
                            return Err(fail(format!("`{}` is not a maintenance location", step.from)));
                        }
                    }
                    ServiceKind::Deadhead => {}
                }
                prev = Some(step);
            }
        }

        for (t, trip) in instance.trips.iter().enumerate() {
            if coverage[t] != trip.n_vehicles {
                return Err(Error::Validation(format!(
                    "trip `{}` operated {} times, required {}",
                    trip.id, coverage[t], trip.n_vehicles
                )));
            }
        }
        if let Some((l, d)) = balance.iter().find(|(_, d)| **d != 0) {
            return Err(Error::Validation(format!(
                "location `{}` is unbalanced by {d}",
                instance.locations[*l].id
            )));
        }
        let total = self.total_cost();
        if !self.objective.is_finite()
            || (total - self.objective).abs() > OBJECTIVE_TOL * self.objective.abs().max(1.0)
        {
            return Err(Error::Validation(format!(
                "objective {} differs from the summed step costs {total}",
                self.objective
            )));
        }
        Ok(())
    }
}

fn location(instance: &Instance, id: &str) -> Result<usize> {
    instance.location_index(id).ok_or_else(|| Error::UnknownReference {
        kind: "location",
        id: id.to_string(),
    })
}
