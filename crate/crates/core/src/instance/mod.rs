//! Domain model for rotation-planning instances with predictive maintenance.
//!
//! An [`Instance`] is immutable after loading. Cross references between
//! entities (trip → location, trip → degradation, …) are resolved to
//! indices into the owning vectors during validation; the string ids are
//! kept for serialization and reporting.

mod file;
mod solution;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::file::InstanceFile;
pub use self::solution::{RotationPlan, ServiceKind, ServiceStep};

use crate::error::{Error, Result};
use crate::health::HealthFamily;

/// Slack allowed when comparing a declared Lipschitz constant with the slopes.
const LIPSCHITZ_SLACK: f64 = 1e-12;

/// A parameter vector θ characterizing a health-state distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(pub Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        ParameterPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &ParameterPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for ParameterPoint {
    fn from(v: Vec<f64>) -> Self {
        ParameterPoint(v)
    }
}

/// The cuboid parameter space Θ = [lower, upper].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let space = ParameterSpace { lower, upper };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() {
            return Err(Error::Invariant("parameter space needs n >= 1".into()));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::Invariant(format!(
                "parameter space bounds differ in length ({} vs {})",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::Invariant(format!("axis {j} has non-finite bounds")));
            }
            if l >= u {
                return Err(Error::Invariant(format!(
                    "degenerate axis {j}: lower {l} must be < upper {u}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &ParameterPoint) -> bool {
        theta.dim() == self.dim()
            && theta
                .0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn clamp(&self, theta: &ParameterPoint) -> ParameterPoint {
        ParameterPoint(
            theta
                .0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(x, (l, u))| x.clamp(*l, *u))
                .collect(),
        )
    }

    /// Maps θ into the unit cube: (θⱼ − lⱼ)/(uⱼ − lⱼ).
    pub fn to_unit(&self, theta: &ParameterPoint) -> ParameterPoint {
        ParameterPoint(
            theta
                .0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(x, (l, u))| (x - l) / (u - l))
                .collect(),
        )
    }

    /// Inverse of [`ParameterSpace::to_unit`].
    pub fn from_unit(&self, unit: &ParameterPoint) -> ParameterPoint {
        ParameterPoint(
            unit.0
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(x, (l, u))| l + x * (u - l))
                .collect(),
        )
    }

    /// Maps a coordinate on a single axis into unit coordinates.
    pub fn axis_to_unit(&self, axis: usize, value: f64) -> f64 {
        (value - self.lower[axis]) / (self.upper[axis] - self.lower[axis])
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }
}

/// Per-component affine degradation θ′ⱼ = aⱼθⱼ + bⱼ, clamped to Θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub id: String,
    pub slope: Vec<f64>,
    pub offset: Vec<f64>,
    /// Declared Lipschitz constant; must dominate max |aⱼ|.
    pub lipschitz: f64,
}

impl DegradationSpec {
    pub fn identity(id: impl Into<String>, n: usize) -> Self {
        DegradationSpec {
            id: id.into(),
            slope: vec![1.0; n],
            offset: vec![0.0; n],
            lipschitz: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.slope.iter().all(|a| *a == 1.0) && self.offset.iter().all(|b| *b == 0.0)
    }

    /// Exact Lipschitz constant of the affine part.
    pub fn max_abs_slope(&self) -> f64 {
        self.slope.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// Whether the map is nondecreasing in every component.
    pub fn is_order_preserving(&self) -> bool {
        self.slope.iter().all(|a| *a >= 0.0)
    }

    pub fn apply(&self, theta: &ParameterPoint, space: &ParameterSpace) -> ParameterPoint {
        let raw: Vec<f64> = theta
            .0
            .iter()
            .zip(self.slope.iter().zip(&self.offset))
            .map(|(x, (a, b))| a * x + b)
            .collect();
        space.clamp(&ParameterPoint(raw))
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.slope.len() != n || self.offset.len() != n {
            return Err(Error::Invariant(format!(
                "degradation `{}` must have {n} slope and offset entries",
                self.id
            )));
        }
        if self
            .slope
            .iter()
            .chain(&self.offset)
            .chain(std::iter::once(&self.lipschitz))
            .any(|v| !v.is_finite())
        {
            return Err(Error::Invariant(format!(
                "degradation `{}` has non-finite coefficients",
                self.id
            )));
        }
        let exact = self.max_abs_slope();
        if self.lipschitz + LIPSCHITZ_SLACK < exact {
            return Err(Error::Invariant(format!(
                "degradation `{}`: Lipschitz constant {} is below max |slope| = {exact}",
                self.id, self.lipschitz
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub id: String,
    pub is_maintenance: bool,
    /// θ_M for workshops.
    pub reset_params: Option<ParameterPoint>,
    /// k_M in minutes.
    pub service_duration: u32,
    pub maintenance_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trip {
    pub id: String,
    pub dep_time: u32,
    pub arr_time: u32,
    pub dep_loc: usize,
    pub arr_loc: usize,
    pub n_vehicles: u32,
    pub degradation: usize,
    pub base_cost: f64,
    /// Service wear α used by the reliability families.
    pub mileage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: String,
    pub origin: usize,
    pub initial_params: ParameterPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub failure_cost: f64,
    pub deadhead_cost_per_distance: f64,
    pub vehicle_usage_cost: f64,
    pub distance: Vec<Vec<f64>>,
    pub travel_time: Vec<Vec<u32>>,
}

impl CostConfig {
    pub fn deadhead_cost(&self, from: usize, to: usize) -> f64 {
        self.distance[from][to] * self.deadhead_cost_per_distance
    }
}

/// A validated rotation-planning instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    pub parameter_space: ParameterSpace,
    pub family: HealthFamily,
    pub wait_degradation: Option<usize>,
    pub deadhead_degradation: Option<usize>,
    /// Last usable minute; the end-of-horizon sentinel is `horizon + 1`.
    pub horizon: u32,
    pub locations: Vec<Location>,
    pub trips: Vec<Trip>,
    pub vehicles: Vec<Vehicle>,
    pub degradations: Vec<DegradationSpec>,
    pub costs: CostConfig,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.parameter_space.dim()
    }

    /// Sentinel time of the end-of-horizon nodes.
    pub fn end_time(&self) -> u32 {
        self.horizon + 1
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn location_index(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.id == id)
    }

    pub fn trip_index(&self, id: &str) -> Option<usize> {
        self.trips.iter().position(|t| t.id == id)
    }

    pub fn vehicle_index(&self, id: &str) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }

    /// Mileage α passed to the failure probability of `trip`.
    pub fn trip_alpha(&self, trip: usize) -> Option<f64> {
        if self.family.is_reliability() {
            Some(self.trips[trip].mileage)
        } else {
            None
        }
    }

    /// Distinct trip mileages, sorted ascending (empty for the normal family).
    pub fn alpha_set(&self) -> Vec<f64> {
        if !self.family.is_reliability() {
            return Vec::new();
        }
        let mut alphas: Vec<f64> = self.trips.iter().map(|t| t.mileage).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        alphas
    }

    pub fn apply_trip(&self, trip: usize, theta: &ParameterPoint) -> ParameterPoint {
        self.degradations[self.trips[trip].degradation].apply(theta, &self.parameter_space)
    }

    pub fn apply_wait(&self, theta: &ParameterPoint) -> ParameterPoint {
        match self.wait_degradation {
            Some(d) => self.degradations[d].apply(theta, &self.parameter_space),
            None => theta.clone(),
        }
    }

    pub fn apply_deadhead(&self, theta: &ParameterPoint) -> ParameterPoint {
        match self.deadhead_degradation {
            Some(d) => self.degradations[d].apply(theta, &self.parameter_space),
            None => theta.clone(),
        }
    }

    /// Largest Lipschitz constant over all degradations the instance uses.
    pub fn max_lipschitz(&self) -> f64 {
        let mut used: Vec<usize> = self.trips.iter().map(|t| t.degradation).collect();
        used.extend(self.wait_degradation);
        used.extend(self.deadhead_degradation);
        used.into_iter()
            .map(|d| self.degradations[d].lipschitz)
            .fold(1.0_f64, f64::max)
    }

    pub fn maintenance_locations(&self) -> impl Iterator<Item = usize> + '_ {
        self.locations
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_maintenance)
            .map(|(i, _)| i)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Parses and validates an instance. Invariant violations and unknown
    /// ids keep their own error kind instead of being folded into a serde message.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Instance::try_from(raw)
    }
}

/// Reads and fully validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Instance::from_json(&text)
}

pub fn save_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = instance.to_json()?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Validates `plan` against `instance` and writes it as JSON.
pub fn save_solution(plan: &RotationPlan, instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    plan.validate(instance)?;
    let path = path.as_ref();
    let text =
        serde_json::to_string_pretty(plan).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<RotationPlan> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))
}
