mod common;

use rsrp::discretization::Discretization;
use rsrp::flow::{
    available_backends, backend_by_name, extract_rotations, solve, to_lp_string, FlowModel, RowKind, SolveOptions,
    SolveStatus,
};
use rsrp::graph::{build_seeg, Seeg};
use rsrp::health::RegionSet;
use rsrp::instance::{Instance, ServiceKind};
use serde_json::json;

fn model_at(instance: &Instance, level: u32) -> (Seeg, FlowModel) {
    let regions = RegionSet::for_instance(instance);
    let grid = Discretization::for_regions(level, 2, &instance.parameter_space, &regions).unwrap();
    let seeg = build_seeg(instance, &grid).unwrap();
    let model = FlowModel::build(&seeg, instance);
    (seeg, model)
}

fn run(model: &FlowModel, relaxed: bool) -> rsrp::flow::FlowSolution {
    solve(model, common::backend().as_ref(), relaxed, &SolveOptions::for_model(model)).unwrap()
}

#[test]
fn empty_timetable_costs_nothing() {
    let inst = common::instance(&common::two_location_json(json!([])));
    let (seeg, model) = model_at(&inst, 0);
    assert!(!model.rows.iter().any(|r| matches!(r.kind, RowKind::Coverage(_))));
    let sol = run(&model, false);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_eq!(sol.objective, Some(0.0));
    let plan = extract_rotations(&sol, &seeg, &inst).unwrap();
    assert!(plan.rotations.is_empty());
    assert_eq!(plan.objective, 0.0);

    let sol = run(&FlowModel::with_demands(&Seeg::default(), &[], 0, 0.0), false);
    assert_eq!(sol.objective, Some(0.0));
}

#[test]
fn coverage_rows_carry_the_demand() {
    let mut v = common::single_trip_json();
    v["trips"][0]["n_vehicles"] = json!(2);
    let inst = common::instance(&v);
    let (_, model) = model_at(&inst, 0);
    let cover: Vec<_> = model.rows.iter().filter(|r| matches!(r.kind, RowKind::Coverage(_))).collect();
    assert_eq!(cover.len(), 1);
    assert_eq!(cover[0].rhs, 2.0);
    // Only one vehicle exists, so two units of flow cannot cover the trip.
    assert_eq!(run(&model, false).status, SolveStatus::Infeasible);
    let balance = model.rows.iter().filter(|r| matches!(r.kind, RowKind::Balance(_))).count();
    assert_eq!(balance, 2);
    let inst = common::instance(&common::single_trip_json());
    let (seeg, model) = model_at(&inst, 0);
    for (c, a) in model.columns.iter().zip(&seeg.arcs) {
        assert_eq!(c.binary, a.kind == ServiceKind::ArtStart);
    }
}

#[test]
fn trip_without_arcs_is_infeasible_without_solving() {
    let model = FlowModel::with_demands(&Seeg::default(), &[1], 1, 1.0);
    assert!(model.trivially_infeasible);
    let sol = run(&model, true);
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(sol.objective.is_none() && sol.bound.is_none());
    assert!(to_lp_string(&model, false).contains("no_arc_for_trip"));
}

#[test]
fn overlapping_trips_need_two_vehicles() {
    let trip = |id: &str| {
        json!({ "id": id, "dep_time": 10, "arr_time": 40, "dep_loc": "A", "arr_loc": "B",
                "degradation": "wear", "base_cost": 10.0 })
    };
    let v = common::two_location_json(json!([trip("x"), trip("y")]));
    let (_, model) = model_at(&common::instance(&v), 1);
    assert!(!model.trivially_infeasible);
    assert_eq!(run(&model, false).status, SolveStatus::Infeasible);
}

#[test]
fn relaxation_bounds_the_integer_program() {
    for inst in common::tiny_instances(20) {
        let (_, model) = model_at(&inst, 1);
        let (lp, ilp) = (run(&model, true), run(&model, false));
        if ilp.status == SolveStatus::Infeasible {
            continue;
        }
        let (lp, ilp) = (lp.objective.unwrap(), ilp.objective.unwrap());
        assert!(lp <= ilp + 1e-7 * ilp.abs().max(1.0), "{lp} > {ilp}");
    }
}

#[test]
fn backends_agree() {
    let names = available_backends();
    if names.len() < 2 {
        return;
    }
    for inst in common::tiny_instances(8) {
        let (_, model) = model_at(&inst, 0);
        let options = SolveOptions::for_model(&model);
        let results: Vec<_> = names
            .iter()
            .map(|n| solve(&model, backend_by_name(n).unwrap().as_ref(), false, &options).unwrap())
            .collect();
        for r in &results[1..] {
            assert_eq!(r.status, results[0].status);
            if let (Some(a), Some(b)) = (r.objective, results[0].objective) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
    assert!(backend_by_name("cplex").is_err());
}

#[test]
fn lp_text() {
    let inst = common::instance(&common::single_trip_json());
    let (_, model) = model_at(&inst, 0);
    let text = to_lp_string(&model, false);
    assert!(text.starts_with("\\ arc-flow rotation model\nMinimize\n obj:"));
    assert!(text.contains("Subject To\n cover_t0:"));
    assert!(text.contains(" = 1\n"));
    assert!(text.contains("Binary\n"));
    assert!(text.ends_with("End\n"));
    for c in 0..model.columns.len() {
        assert!(text.contains(&format!(" 0 <= x{c} <= ")));
    }
    let relaxed = to_lp_string(&model, true);
    assert!(!relaxed.contains("General") && !relaxed.contains("Binary"));
}

#[test]
fn extracted_rotations_are_valid() {
    let mut solved = 0;
    for inst in common::tiny_instances(20) {
        let (seeg, model) = model_at(&inst, 1);
        let sol = run(&model, false);
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        solved += 1;
        assert!(model.max_violation(&sol.values) <= 1e-6);
        let plan = extract_rotations(&sol, &seeg, &inst).unwrap();
        plan.validate(&inst).unwrap();
        let objective = sol.objective.unwrap();
        assert!((plan.objective - objective).abs() <= 1e-9 * objective.max(1.0));
        assert!((plan.total_cost() - objective).abs() <= 1e-9 * objective.max(1.0));
        let mut covered = vec![0u32; inst.trips.len()];
        let mut balance = vec![0i32; inst.n_locations()];
        for rotation in &plan.rotations {
            assert_eq!(rotation.first().unwrap().service_kind, ServiceKind::ArtStart);
            assert_eq!(rotation.last().unwrap().service_kind, ServiceKind::ArtEnd);
            for w in rotation.windows(2) {
                assert!(w[0].arrive <= w[1].depart);
            }
            for step in rotation.iter().filter(|s| s.service_kind == ServiceKind::Trip) {
                let t = inst.trips.iter().position(|t| Some(&t.id) == step.id.as_ref()).unwrap();
                covered[t] += 1;
            }
            let at = |id: &str| inst.locations.iter().position(|l| l.id == id).unwrap();
            balance[at(&rotation.first().unwrap().from)] += 1;
            balance[at(&rotation.last().unwrap().to)] -= 1;
        }
        // As many vehicles end at each location as start there.
        assert!(balance.iter().all(|b| *b == 0), "{balance:?}");
        assert!(covered.iter().zip(&inst.trips).all(|(c, t)| *c == t.n_vehicles));
    }
    assert!(solved >= 10, "{solved}");
}

#[test]
fn relaxed_or_mismatched_flows_are_rejected() {
    let inst = common::instance(&common::single_trip_json());
    let (seeg, model) = model_at(&inst, 0);
    let mut sol = run(&model, false);
    sol.values[0] = 0.5;
    assert!(extract_rotations(&sol, &seeg, &inst).is_err());
    sol.values.pop();
    assert!(extract_rotations(&sol, &seeg, &inst).is_err());
    let relaxed = run(&model, true);
    assert!(extract_rotations(&relaxed, &seeg, &inst).is_err());
}
