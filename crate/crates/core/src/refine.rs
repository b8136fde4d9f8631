//! Iterative refinement: solve the flow model over ever finer grids,
//! collecting a nondecreasing sequence of lower bounds and, in dual mode,
//! upper bounds from exactly re-priced rotations.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{Error, Result};
use crate::flow::{self, backend_by_name, FlowModel, SolveOptions, SolveStatus, DEFAULT_BACKEND};
use crate::graph::build_seeg;
use crate::health::{check_alignment, RegionSet};
use crate::instance::{Instance, ParameterPoint, RotationPlan, ServiceKind};

/// Samples per degradation in the alignment pre-check.
const ALIGNMENT_SAMPLES: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Integer program at every level; repropagated plans give upper bounds.
    Dual,
    /// LP relaxation only; lower bounds without primal plans.
    LpLb,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineConfig {
    pub k: u32,
    pub start_level: u32,
    pub max_iterations: u32,
    /// Seconds.
    pub time_limit: f64,
    pub mode: RefineMode,
    /// Absolute tolerance for declaring lb ≥ ub.
    pub tolerance: f64,
    pub solver: String,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            k: 2,
            start_level: 0,
            max_iterations: 6,
            time_limit: 3600.0,
            mode: RefineMode::Dual,
            tolerance: 1e-9,
            solver: DEFAULT_BACKEND.to_string(),
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Invariant(format!("subdivision factor k must be at least 2, got {}", self.k)));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::Invariant(format!("time limit must be positive, got {}", self.time_limit)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invariant("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Invariant(format!("tolerance must be nonnegative, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// lb and ub met within tolerance.
    Converged,
    MaxIterations,
    TimeLimit,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub level: u32,
    pub states: usize,
    pub nodes: usize,
    pub arcs: usize,
    pub solve_status: SolveStatus,
    /// Lower bound proven at this level.
    pub lb: Option<f64>,
    /// Repropagated cost of this level's plan.
    pub ub_iteration: Option<f64>,
    /// Best repropagated cost so far.
    pub ub: Option<f64>,
    /// Some repropagated parameter left the box and was clamped.
    pub clamped: bool,
    /// Seconds; left out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelChecks {
    /// All degradations used by the instance preserve the P_f order on samples.
    pub aligned: bool,
    /// Every degradation has nonnegative slopes.
    pub order_preserving: bool,
    /// A single rounding direction serves the whole box.
    pub uniform_signs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementReport {
    pub mode: RefineMode,
    pub k: u32,
    pub solver: String,
    pub seed: u64,
    pub checks: ModelChecks,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub best_plan: Option<RotationPlan>,
}

impl RefinementReport {
    pub fn gap(&self) -> Option<f64> {
        match (self.lb, self.ub) {
            (Some(l), Some(u)) => Some(u - l),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Runs the refinement loop. `on_iteration` sees every record as soon as
/// it is complete.
pub fn run_with(
    instance: &Instance,
    config: &RefineConfig,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<RefinementReport> {
    config.validate()?;
    let clock = Instant::now();
    let backend = backend_by_name(&config.solver)?;
    let regions = RegionSet::for_instance(instance);
    let checks = model_checks(instance, &regions, config.seed)?;
    if !checks.aligned && !(checks.order_preserving && checks.uniform_signs) {
        log::warn!("degradations are neither aligned nor order preserving in a single region; lower bounds may be invalid");
    }

    let mut grid = Discretization::for_regions(config.start_level, config.k, &instance.parameter_space, &regions)?;
    let mut report = RefinementReport {
        mode: config.mode,
        k: config.k,
        solver: backend.name().to_string(),
        seed: config.seed,
        checks,
        iterations: Vec::new(),
        status: RunStatus::MaxIterations,
        lb: None,
        ub: None,
        best_plan: None,
    };
    let relaxed = config.mode == RefineMode::LpLb;

    for it in 0..config.max_iterations {
        let started = clock.elapsed().as_secs_f64();
        let remaining = config.time_limit - started;
        if remaining <= 0.0 {
            report.status = RunStatus::TimeLimit;
            break;
        }
        if it > 0 {
            grid = grid.refine()?;
        }
        let seeg = build_seeg(instance, &grid)?;
        let model = FlowModel::build(&seeg, instance);
        let remaining = config.time_limit - clock.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            report.status = RunStatus::TimeLimit;
            break;
        }
        let mut options = SolveOptions::for_model(&model);
        options.seed = config.seed;
        options.time_limit = Some(remaining);
        let sol = flow::solve(&model, backend.as_ref(), relaxed, &options)?;

        let mut record = IterationRecord {
            level: grid.level(),
            states: grid.len(),
            nodes: seeg.nodes.len(),
            arcs: seeg.arcs.len(),
            solve_status: sol.status,
            lb: sol.bound,
            ub_iteration: None,
            ub: report.ub,
            clamped: false,
            wall_time: 0.0,
        };
        if let Some(b) = sol.bound {
            report.lb = Some(report.lb.map_or(b, |l: f64| l.max(b)));
        }
        if !relaxed && (!sol.values.is_empty() || (sol.status == SolveStatus::Optimal && seeg.arcs.is_empty())) {
            let plan = flow::extract_rotations(&sol, &seeg, instance)?;
            let (exact, clamped) = repropagate(&plan, instance)?;
            record.clamped = clamped;
            record.ub_iteration = Some(exact.objective);
            if report.ub.is_none_or(|u| exact.objective < u) {
                report.ub = Some(exact.objective);
                report.best_plan = Some(exact);
            }
            record.ub = report.ub;
        }
        record.wall_time = clock.elapsed().as_secs_f64() - started;
        on_iteration(&record);
        report.iterations.push(record);

        match sol.status {
            SolveStatus::Infeasible => {
                report.status = RunStatus::Infeasible;
                break;
            }
            SolveStatus::TimeLimit => {
                report.status = RunStatus::TimeLimit;
                break;
            }
            SolveStatus::Optimal => {}
        }
        if let (Some(l), Some(u)) = (report.lb, report.ub) {
            if l >= u - config.tolerance {
                report.status = RunStatus::Converged;
                break;
            }
        }
    }
    if let (Some(plan), lb) = (report.best_plan.as_mut(), report.lb) {
        plan.lower_bound = lb;
    }
    Ok(report)
}

pub fn run(instance: &Instance, config: &RefineConfig) -> Result<RefinementReport> {
    run_with(instance, config, |_| {})
}

fn model_checks(instance: &Instance, regions: &RegionSet, seed: u64) -> Result<ModelChecks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = &instance.parameter_space;
    let mut used: Vec<(usize, Option<f64>)> = Vec::new();
    for (t, trip) in instance.trips.iter().enumerate() {
        used.push((trip.degradation, instance.trip_alpha(t)));
    }
    // Wait and deadhead wear is judged against every mileage in use.
    let alphas: Vec<Option<f64>> = if instance.family.is_reliability() {
        instance.alpha_set().into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    for d in instance.wait_degradation.iter().chain(&instance.deadhead_degradation) {
        used.extend(alphas.iter().map(|a| (*d, *a)));
    }
    used.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.unwrap_or(0.0).total_cmp(&b.1.unwrap_or(0.0))));
    used.dedup();

    let mut aligned = true;
    for &(d, alpha) in &used {
        let rep = check_alignment(instance.family, space, &instance.degradations[d], alpha, ALIGNMENT_SAMPLES, &mut rng)?;
        if !rep.passed() {
            log::debug!("degradation `{}` misaligned: {:?}", instance.degradations[d].id, rep.witness);
            aligned = false;
        }
    }
    Ok(ModelChecks {
        aligned,
        order_preserving: used.iter().all(|&(d, _)| instance.degradations[d].is_order_preserving()),
        uniform_signs: regions.uniform_signs(space).is_some(),
    })
}

/// Re-prices a plan with the exact degradation functions.
///
/// Returns the plan with exact `theta_after` values and trip costs, and
/// whether some parameter had to be clamped back into the box.
pub fn repropagate(plan: &RotationPlan, instance: &Instance) -> Result<(RotationPlan, bool)> {
    let space = &instance.parameter_space;
    let mut clamped = false;
    let mut rotations = Vec::with_capacity(plan.rotations.len());
    for rotation in &plan.rotations {
        let vehicle = RotationPlan::vehicle_of(rotation)
            .and_then(|id| instance.vehicle_index(id))
            .ok_or_else(|| Error::Validation("rotation does not start with a known vehicle".into()))?;
        let mut theta = instance.vehicles[vehicle].initial_params.clone();
        let mut steps = Vec::with_capacity(rotation.len());
        for step in rotation {
            let mut step = step.clone();
            let degrade = |d: Option<usize>, theta: &ParameterPoint, clamped: &mut bool| match d {
                Some(d) => {
                    let spec = &instance.degradations[d];
                    let raw = ParameterPoint(
                        theta.0.iter().zip(spec.slope.iter().zip(&spec.offset)).map(|(x, (a, b))| a * x + b).collect(),
                    );
                    *clamped |= !space.contains(&raw);
                    space.clamp(&raw)
                }
                None => theta.clone(),
            };
            match step.service_kind {
                ServiceKind::ArtStart | ServiceKind::ArtEnd => {}
                ServiceKind::Trip => {
                    let t = step
                        .id
                        .as_deref()
                        .and_then(|id| instance.trip_index(id))
                        .ok_or_else(|| Error::Validation(format!("unknown trip {:?}", step.id)))?;
                    theta = degrade(Some(instance.trips[t].degradation), &theta, &mut clamped);
                    let pf = instance.family.failure_probability(&theta.0, instance.trip_alpha(t))?;
                    step.cost = instance.trips[t].base_cost + instance.costs.failure_cost * pf;
                }
                ServiceKind::Wait => theta = degrade(instance.wait_degradation, &theta, &mut clamped),
                ServiceKind::Deadhead | ServiceKind::MaintOut => {
                    theta = degrade(instance.deadhead_degradation, &theta, &mut clamped);
                }
                ServiceKind::MaintIn => {
                    let m = instance
                        .location_index(&step.to)
                        .ok_or_else(|| Error::Validation(format!("unknown location `{}`", step.to)))?;
                    theta = instance.locations[m]
                        .reset_params
                        .clone()
                        .ok_or_else(|| Error::Validation(format!("`{}` is not a workshop", step.to)))?;
                }
            }
            step.theta_after = theta.0.clone();
            steps.push(step);
        }
        rotations.push(steps);
    }
    let objective = rotations.iter().flatten().map(|s| s.cost).sum();
    Ok((
        RotationPlan {
            rotations,
            objective,
            lower_bound: plan.lower_bound,
        },
        clamped,
    ))
}
