//! On-disk JSON form of an instance; ids are strings and resolved on conversion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    CostConfig, DegradationSpec, Instance, Location, ParameterPoint, ParameterSpace, Trip, Vehicle,
};
use crate::error::{Error, Result};
use crate::health::{self, HealthFamily};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub parameter_space: ParameterSpace,
    pub health_model: HealthModelFile,
    pub horizon: u32,
    pub locations: Vec<LocationFile>,
    pub trips: Vec<TripFile>,
    pub vehicles: Vec<VehicleFile>,
    pub degradations: Vec<DegradationSpec>,
    pub costs: CostConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthModelFile {
    pub family: HealthFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wait_degradation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadhead_degradation: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationFile {
    pub id: String,
    #[serde(default)]
    pub is_maintenance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_params: Option<ParameterPoint>,
    #[serde(default)]
    pub service_duration: u32,
    #[serde(default)]
    pub maintenance_cost: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripFile {
    pub id: String,
    pub dep_time: u32,
    pub arr_time: u32,
    pub dep_loc: String,
    pub arr_loc: String,
    #[serde(default = "one")]
    pub n_vehicles: u32,
    pub degradation: String,
    pub base_cost: f64,
    #[serde(default)]
    pub mileage: f64,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFile {
    pub id: String,
    pub origin: String,
    pub initial_params: ParameterPoint,
}

fn index_of(
    map: &HashMap<&str, usize>,
    kind: &'static str,
    id: &str,
) -> Result<usize> {
    map.get(id)
        .copied()
        .ok_or_else(|| Error::UnknownReference {
            kind,
            id: id.to_string(),
        })
}

fn unique_ids<'a>(
    kind: &'static str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            return Err(Error::Invariant(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(map)
}

fn check_point(space: &ParameterSpace, what: &str, p: &ParameterPoint) -> Result<()> {
    if p.dim() != space.dim() || p.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invariant(format!(
            "{what} must be a finite vector of length {}",
            space.dim()
        )));
    }
    if !space.contains(p) {
        return Err(Error::Invariant(format!(
            "{what} {:?} lies outside the parameter space",
            p.0
        )));
    }
    Ok(())
}

fn check_cost(what: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Invariant(format!("{what} must be a finite value >= 0, got {v}")));
    }
    Ok(())
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Instance> {
        f.parameter_space.validate()?;
        let space = f.parameter_space;
        let n = space.dim();
        let family = f.health_model.family;
        health::check_space(family, &space)?;

        let loc_ids = unique_ids("location", f.locations.iter().map(|l| l.id.as_str()))?;
        let deg_ids = unique_ids("degradation", f.degradations.iter().map(|d| d.id.as_str()))?;
        unique_ids("trip", f.trips.iter().map(|t| t.id.as_str()))?;
        unique_ids("vehicle", f.vehicles.iter().map(|v| v.id.as_str()))?;

        for d in &f.degradations {
            d.validate(n)?;
        }

        let mut locations = Vec::with_capacity(f.locations.len());
        for l in &f.locations {
            match (&l.reset_params, l.is_maintenance) {
                (Some(p), true) => check_point(&space, &format!("reset_params of `{}`", l.id), p)?,
                (None, false) => {}
                (None, true) => {
                    return Err(Error::Invariant(format!(
                        "maintenance location `{}` needs reset_params",
                        l.id
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::Invariant(format!(
                        "location `{}` has reset_params but is not a maintenance location",
                        l.id
                    )))
                }
            }
            if l.is_maintenance && l.service_duration == 0 {
                return Err(Error::Invariant(format!(
                    "maintenance location `{}` needs service_duration >= 1",
                    l.id
                )));
            }
            check_cost(&format!("maintenance_cost of `{}`", l.id), l.maintenance_cost)?;
            locations.push(Location {
                id: l.id.clone(),
                is_maintenance: l.is_maintenance,
                reset_params: l.reset_params.clone(),
                service_duration: l.service_duration,
                maintenance_cost: l.maintenance_cost,
            });
        }

        let mut trips = Vec::with_capacity(f.trips.len());
        for t in &f.trips {
            let dep_loc = index_of(&loc_ids, "location", &t.dep_loc)?;
            let arr_loc = index_of(&loc_ids, "location", &t.arr_loc)?;
            let degradation = index_of(&deg_ids, "degradation", &t.degradation)?;
            if t.dep_time >= t.arr_time {
                return Err(Error::Invariant(format!(
                    "trip `{}`: dep_time {} must be < arr_time {}",
                    t.id, t.dep_time, t.arr_time
                )));
            }
            if t.arr_time > f.horizon {
                return Err(Error::Invariant(format!(
                    "trip `{}`: arr_time {} exceeds the horizon {}",
                    t.id, t.arr_time, f.horizon
                )));
            }
            if t.n_vehicles == 0 {
                return Err(Error::Invariant(format!("trip `{}`: n_vehicles must be >= 1", t.id)));
            }
            check_cost(&format!("base_cost of trip `{}`", t.id), t.base_cost)?;
            if !t.mileage.is_finite() || t.mileage < 0.0 {
                return Err(Error::Invariant(format!(
                    "trip `{}`: mileage must be finite and >= 0",
                    t.id
                )));
            }
            if family.is_reliability() && t.mileage <= 0.0 {
                return Err(Error::Invariant(format!(
                    "trip `{}`: mileage must be > 0 for the {family} family",
                    t.id
                )));
            }
            trips.push(Trip {
                id: t.id.clone(),
                dep_time: t.dep_time,
                arr_time: t.arr_time,
                dep_loc,
                arr_loc,
                n_vehicles: t.n_vehicles,
                degradation,
                base_cost: t.base_cost,
                mileage: t.mileage,
            });
        }

        let mut vehicles = Vec::with_capacity(f.vehicles.len());
        for v in &f.vehicles {
            let origin = index_of(&loc_ids, "location", &v.origin)?;
            check_point(&space, &format!("initial_params of vehicle `{}`", v.id), &v.initial_params)?;
            vehicles.push(Vehicle {
                id: v.id.clone(),
                origin,
                initial_params: v.initial_params.clone(),
            });
        }

        let costs = f.costs;
        check_cost("failure_cost", costs.failure_cost)?;
        check_cost("deadhead_cost_per_distance", costs.deadhead_cost_per_distance)?;
        check_cost("vehicle_usage_cost", costs.vehicle_usage_cost)?;
        let nl = locations.len();
        let square = |rows: usize, cols: &[usize]| rows == nl && cols.iter().all(|c| *c == nl);
        let dist_cols: Vec<usize> = costs.distance.iter().map(Vec::len).collect();
        let tt_cols: Vec<usize> = costs.travel_time.iter().map(Vec::len).collect();
        if !square(costs.distance.len(), &dist_cols) || !square(costs.travel_time.len(), &tt_cols) {
            return Err(Error::Invariant(format!(
                "distance and travel_time must be {nl}x{nl} matrices"
            )));
        }
        for a in 0..nl {
            for b in 0..nl {
                check_cost(&format!("distance[{a}][{b}]"), costs.distance[a][b])?;
                if a == b && (costs.distance[a][b] != 0.0 || costs.travel_time[a][b] != 0) {
                    return Err(Error::Invariant(format!("matrix diagonal entry [{a}][{a}] must be zero")));
                }
                if a != b && costs.travel_time[a][b] == 0 {
                    return Err(Error::Invariant(format!(
                        "travel_time[{a}][{b}] between distinct locations must be >= 1"
                    )));
                }
            }
        }

        let wait_degradation = f
            .health_model
            .wait_degradation
            .as_deref()
            .map(|id| index_of(&deg_ids, "degradation", id))
            .transpose()?;
        let deadhead_degradation = f
            .health_model
            .deadhead_degradation
            .as_deref()
            .map(|id| index_of(&deg_ids, "degradation", id))
            .transpose()?;

        let instance = Instance {
            parameter_space: space,
            family,
            wait_degradation,
            deadhead_degradation,
            horizon: f.horizon,
            locations,
            trips,
            vehicles,
            degradations: f.degradations,
            costs,
        };
        health::check_instance_model(&instance)?;
        Ok(instance)
    }
}

impl From<Instance> for InstanceFile {
    fn from(i: Instance) -> InstanceFile {
        let loc = |idx: usize| i.locations[idx].id.clone();
        let deg = |idx: usize| i.degradations[idx].id.clone();
        InstanceFile {
            parameter_space: i.parameter_space.clone(),
            health_model: HealthModelFile {
                family: i.family,
                wait_degradation: i.wait_degradation.map(deg),
                deadhead_degradation: i.deadhead_degradation.map(deg),
            },
            horizon: i.horizon,
            locations: i
                .locations
                .iter()
                .map(|l| LocationFile {
                    id: l.id.clone(),
                    is_maintenance: l.is_maintenance,
                    reset_params: l.reset_params.clone(),
                    service_duration: l.service_duration,
                    maintenance_cost: l.maintenance_cost,
                })
                .collect(),
            trips: i
                .trips
                .iter()
                .map(|t| TripFile {
                    id: t.id.clone(),
                    dep_time: t.dep_time,
                    arr_time: t.arr_time,
                    dep_loc: loc(t.dep_loc),
                    arr_loc: loc(t.arr_loc),
                    n_vehicles: t.n_vehicles,
                    degradation: deg(t.degradation),
                    base_cost: t.base_cost,
                    mileage: t.mileage,
                })
                .collect(),
            vehicles: i
                .vehicles
                .iter()
                .map(|v| VehicleFile {
                    id: v.id.clone(),
                    origin: loc(v.origin),
                    initial_params: v.initial_params.clone(),
                })
                .collect(),
            degradations: i.degradations.clone(),
            costs: i.costs.clone(),
        }
    }
}
