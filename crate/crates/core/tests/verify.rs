mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsrp::discretization::Discretization;
use rsrp::error::Error;
use rsrp::gen::{generate, GenConfig};
use rsrp::health::{HealthFamily, RegionSet};
use rsrp::verify::{
    brute_force_exact_cover, check_error_propagation, check_underestimation, enumerate_graph, enumerate_optimal,
    exact_cover_to_epcp, propagation_bound, random_sequence, ExactCoverInstance, SequenceStep,
};
use serde_json::json;

fn grid(inst: &rsrp::instance::Instance, level: u32) -> Discretization {
    let regions = RegionSet::for_instance(inst);
    Discretization::for_regions(level, 2, &inst.parameter_space, &regions).unwrap()
}

#[test]
fn propagation_bound_values() {
    let eps = 2f64.sqrt() / 4.0;
    // ε(1.5⁴ − 1)/0.5
    assert!((propagation_bound(1.5, 3, eps) - 8.125 * eps).abs() < 1e-12);
    assert!((propagation_bound(1.5, 3, eps) - 2.8726).abs() < 1e-4);
    for k in 0..6 {
        assert_eq!(propagation_bound(1.0, k, 0.1), (k as f64 + 1.0) * 0.1);
    }
    assert_eq!(propagation_bound(0.5, 0, 0.2), 0.2);
}

#[test]
fn oracle_matches_hand_computation() {
    let inst = common::instance(&common::single_trip_json());
    let res = enumerate_optimal(&inst).unwrap();
    let pf = inst.family.failure_probability(&[0.9, 0.15], None).unwrap();
    // Vehicle use, the trip with its failure cost, the deadhead home.
    let expected = 10.0 + 10.0 + 100.0 * pf + 5.0;
    assert!((res.optimum.unwrap() - expected).abs() <= 1e-12);
    assert!(res.assignment.is_some());
    assert!(res.enumerated > 0);

    let empty = common::instance(&common::two_location_json(json!([])));
    assert_eq!(enumerate_optimal(&empty).unwrap().optimum, Some(0.0));
}

#[test]
fn oracle_reports_infeasibility() {
    let trip = |id: &str| {
        json!({ "id": id, "dep_time": 10, "arr_time": 40, "dep_loc": "A", "arr_loc": "B",
                "degradation": "wear", "base_cost": 10.0 })
    };
    let inst = common::instance(&common::two_location_json(json!([trip("x"), trip("y")])));
    let res = enumerate_optimal(&inst).unwrap();
    assert!(res.optimum.is_none() && res.assignment.is_none());
}

#[test]
fn oracle_guards() {
    let too_many_trips = generate(&GenConfig {
        trips: 8,
        ..GenConfig::default()
    })
    .unwrap();
    let too_many_vehicles = generate(&GenConfig {
        vehicles: 4,
        ..GenConfig::default()
    })
    .unwrap();
    let too_many_locations = generate(&GenConfig {
        locations: 5,
        ..GenConfig::default()
    })
    .unwrap();
    for inst in [too_many_trips, too_many_vehicles, too_many_locations] {
        assert!(matches!(enumerate_optimal(&inst), Err(Error::OracleGuard(_))));
    }
    let big = ExactCoverInstance::new(25, (0..25).map(|e| vec![e]).collect(), vec![1.0; 25]).unwrap();
    assert!(matches!(brute_force_exact_cover(&big), Err(Error::OracleGuard(_))));
}

#[test]
fn exact_cover_reduction() {
    let subsets = vec![vec![0, 3, 6], vec![0, 3], vec![3, 4, 6], vec![2, 4, 5], vec![1, 2, 5, 6], vec![1, 6]];
    let ec = ExactCoverInstance::new(7, subsets, vec![1.0; 6]).unwrap();
    let g = exact_cover_to_epcp(&ec);
    assert_eq!(g.seeg.nodes.len(), 25);
    assert_eq!(g.seeg.arcs.len(), 6 + 17 + 6);
    // {0,3}, {2,4,5}, {1,6} is the only exact cover.
    let brute = brute_force_exact_cover(&ec).unwrap();
    assert_eq!(brute.optimum, Some(3.0));
    assert_eq!(enumerate_graph(&g.seeg, &g.demands, g.n_locations).unwrap().optimum, Some(3.0));

    let single = ExactCoverInstance::new(3, vec![vec![2, 0, 1]], vec![7.5]).unwrap();
    let g = exact_cover_to_epcp(&single);
    assert_eq!(enumerate_graph(&g.seeg, &g.demands, g.n_locations).unwrap().optimum, Some(7.5));

    let none = ExactCoverInstance::new(3, vec![vec![0, 1], vec![1, 2]], vec![1.0, 1.0]).unwrap();
    assert_eq!(brute_force_exact_cover(&none).unwrap().optimum, None);

    assert!(ExactCoverInstance::new(3, vec![vec![0, 0]], vec![1.0]).is_err());
    assert!(ExactCoverInstance::new(3, vec![vec![3]], vec![1.0]).is_err());
    assert!(ExactCoverInstance::new(3, vec![vec![]], vec![1.0]).is_err());
    assert!(ExactCoverInstance::new(3, vec![vec![0]], vec![-1.0]).is_err());
    assert!(ExactCoverInstance::new(3, vec![vec![0]], vec![]).is_err());
}

#[test]
fn rounding_never_overestimates_along_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..4 {
        for family in [HealthFamily::Normal, HealthFamily::Weibull] {
            let inst = generate(&GenConfig {
                family,
                trips: 6,
                seed,
                ..GenConfig::default()
            })
            .unwrap();
            if family == HealthFamily::Weibull {
                assert!(inst.alpha_set().len() >= 2 || inst.trips.len() < 2);
            }
            for level in 0..4 {
                let report = check_underestimation(&inst, &grid(&inst, level), 50, 8, &mut rng).unwrap();
                assert!(report.passed(), "{family:?} seed {seed} level {level}: {:?}", report.witness);
                assert!(report.steps_checked >= 50);
            }
        }
    }
}

#[test]
fn maintenance_resets_the_error() {
    let inst = generate(&GenConfig {
        trips: 5,
        seed: 11,
        ..GenConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut saw_maintenance = false;
    for _ in 0..50 {
        saw_maintenance |= random_sequence(&inst, 10, &mut rng)
            .iter()
            .any(|s| matches!(s, SequenceStep::Maintenance(_)));
    }
    assert!(saw_maintenance);
    for level in 0..4 {
        let g = grid(&inst, level);
        let report = check_error_propagation(&inst, &g, 200, 10, &mut rng).unwrap();
        assert!(report.passed(), "level {level}: {:?}", report.witness);
        assert_eq!(report.epsilon, g.epsilon());
    }
}
