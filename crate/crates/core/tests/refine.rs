mod common;

use rsrp::discretization::Discretization;
use rsrp::flow::{extract_rotations, solve, FlowModel, SolveOptions, SolveStatus};
use rsrp::graph::build_seeg;
use rsrp::health::RegionSet;
use rsrp::instance::{Instance, ServiceKind};
use rsrp::refine::{repropagate, run, run_with, RefineConfig, RefineMode, RunStatus};
use rsrp::verify::{enumerate_optimal, plan_gap_bound};
use serde_json::json;

const TOL: f64 = 1e-6;

fn config(mode: RefineMode, max_iterations: u32) -> RefineConfig {
    RefineConfig {
        mode,
        max_iterations,
        ..RefineConfig::default()
    }
}

#[test]
fn aligned_instances_converge_at_their_grid_level() {
    for inst in common::grid_aligned_instances(4, 1) {
        let report = run(&inst, &config(RefineMode::Dual, 6)).unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert!(report.iterations.len() <= 2, "{}", report.iterations.len());
        let (lb, ub) = (report.lb.unwrap(), report.ub.unwrap());
        assert!((ub - lb).abs() <= TOL);
        let plan = report.best_plan.unwrap();
        plan.validate(&inst).unwrap();
        assert_eq!(plan.lower_bound, Some(lb));
    }
}

#[test]
fn empty_timetable_converges_at_zero() {
    let inst = common::instance(&common::two_location_json(json!([])));
    let report = run(&inst, &RefineConfig::default()).unwrap();
    assert_eq!(report.status, RunStatus::Converged);
    assert_eq!(report.iterations.len(), 1);
    assert_eq!((report.lb, report.ub), (Some(0.0), Some(0.0)));
    assert!(report.best_plan.unwrap().rotations.is_empty());
}

#[test]
fn bounds_bracket_the_optimum() {
    for (n, inst) in common::tiny_instances(20).iter().enumerate() {
        let opt = enumerate_optimal(inst).unwrap().optimum.unwrap();
        let report = run(inst, &config(RefineMode::Dual, 6)).unwrap();
        let (lb, ub) = (report.lb.unwrap(), report.ub.unwrap());
        assert!(lb <= opt + TOL && opt <= ub + TOL, "instance {n}: {lb} {opt} {ub}");
        let mut best = f64::INFINITY;
        for r in &report.iterations {
            best = best.min(r.ub_iteration.unwrap());
            assert_eq!(r.ub, Some(best));
        }
        assert_eq!(report.best_plan.unwrap().objective, ub);
    }
}

#[test]
fn relaxation_bounds_stay_below_integer_bounds() {
    for inst in common::tiny_instances(10) {
        let lp = run(&inst, &config(RefineMode::LpLb, 4)).unwrap();
        let dual = run(&inst, &config(RefineMode::Dual, 4)).unwrap();
        assert!(lp.best_plan.is_none() && lp.ub.is_none());
        assert!(lp.iterations.iter().all(|r| r.ub_iteration.is_none()));
        for (a, b) in lp.iterations.iter().zip(&dual.iterations) {
            assert_eq!(a.level, b.level);
            assert!(a.lb.unwrap() <= b.lb.unwrap() + TOL);
        }
        let lbs: Vec<f64> = lp.iterations.iter().map(|r| r.lb.unwrap()).collect();
        assert_eq!(lp.lb, Some(lbs.iter().copied().fold(f64::MIN, f64::max)));
    }
}

#[test]
fn progress_callback_sees_every_iteration() {
    let inst = &common::tiny_instances(1)[0];
    let mut seen = Vec::new();
    let report = run_with(inst, &config(RefineMode::Dual, 3), |r| seen.push(r.level)).unwrap();
    let levels: Vec<u32> = report.iterations.iter().map(|r| r.level).collect();
    assert_eq!(seen, levels);
    assert_eq!(levels, (0..levels.len() as u32).collect::<Vec<_>>());
}

fn solved_plan(inst: &Instance, level: u32) -> (rsrp::instance::RotationPlan, f64) {
    let regions = RegionSet::for_instance(inst);
    let grid = Discretization::for_regions(level, 2, &inst.parameter_space, &regions).unwrap();
    let seeg = build_seeg(inst, &grid).unwrap();
    let model = FlowModel::build(&seeg, inst);
    let sol = solve(&model, common::backend().as_ref(), false, &SolveOptions::for_model(&model)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    (extract_rotations(&sol, &seeg, inst).unwrap(), grid.epsilon())
}

#[test]
fn repropagation_uses_exact_parameters() {
    let inst = common::instance(&common::single_trip_json());
    let (plan, _) = solved_plan(&inst, 0);
    let (exact, clamped) = repropagate(&plan, &inst).unwrap();
    assert!(!clamped);
    // The trip takes (1, 0.05) to (0.9, 0.15).
    let trip = exact.rotations[0].iter().find(|s| s.service_kind == ServiceKind::Trip).unwrap();
    assert!((trip.theta_after[0] - 0.9).abs() <= 1e-15 && (trip.theta_after[1] - 0.15).abs() <= 1e-15);
    let pf = inst.family.failure_probability(&trip.theta_after, None).unwrap();
    assert!((trip.cost - (10.0 + 100.0 * pf)).abs() <= 1e-12);
    // Vehicle use, the trip and the deadhead home.
    assert!((exact.objective - (10.0 + 10.0 + 100.0 * pf + 5.0)).abs() <= 1e-12);
    assert!(exact.objective >= plan.objective);
    exact.validate(&inst).unwrap();

    let mut v = common::single_trip_json();
    v["vehicles"][0]["initial_params"] = json!([0.05, 0.05]);
    let inst = common::instance(&v);
    let (plan, _) = solved_plan(&inst, 0);
    let (exact, clamped) = repropagate(&plan, &inst).unwrap();
    assert!(clamped);
    let trip = exact.rotations[0].iter().find(|s| s.service_kind == ServiceKind::Trip).unwrap();
    assert_eq!(trip.theta_after[0], 0.0);
}

#[test]
fn repropagated_cost_stays_within_the_gap_bound() {
    for inst in common::tiny_instances(10) {
        for level in 0..3 {
            let (plan, eps) = solved_plan(&inst, level);
            let (exact, _) = repropagate(&plan, &inst).unwrap();
            let bound = plan_gap_bound(&plan, &inst, eps);
            let gap = exact.objective - plan.objective;
            assert!(gap >= -TOL && gap <= bound + TOL, "level {level}: gap {gap} bound {bound}");
        }
    }
}

#[test]
fn config_is_validated() {
    let inst = &common::tiny_instances(1)[0];
    let bad = [
        RefineConfig { k: 1, ..RefineConfig::default() },
        RefineConfig { time_limit: 0.0, ..RefineConfig::default() },
        RefineConfig { time_limit: f64::NAN, ..RefineConfig::default() },
        RefineConfig { max_iterations: 0, ..RefineConfig::default() },
        RefineConfig { tolerance: -1.0, ..RefineConfig::default() },
    ];
    for c in &bad {
        assert!(c.validate().is_err(), "{c:?}");
        assert!(run(inst, c).is_err());
    }
    let unknown = RefineConfig { solver: "nope".into(), ..RefineConfig::default() };
    assert!(run(inst, &unknown).is_err());
}

#[test]
fn reports_are_reproducible() {
    let inst = &common::tiny_instances(3)[2];
    let a = run(inst, &RefineConfig::default()).unwrap().to_json().unwrap();
    let b = run(inst, &RefineConfig::default()).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    assert!(!a.contains("wall_time"));
}
