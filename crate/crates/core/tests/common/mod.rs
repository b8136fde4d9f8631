#![allow(dead_code)]

use rsrp::flow::{backend_by_name, SolverBackend, DEFAULT_BACKEND};
use rsrp::gen::{generate, DegradationProfile, GenConfig};
use rsrp::health::HealthFamily;
use rsrp::instance::Instance;
use serde_json::{json, Value};

pub fn backend() -> Box<dyn SolverBackend> {
    backend_by_name(DEFAULT_BACKEND).unwrap()
}

pub fn instance(value: &Value) -> Instance {
    Instance::from_json(&value.to_string()).unwrap()
}

/// Two locations A and B, one vehicle at A, normal family on the unit-ish box.
pub fn two_location_json(trips: Value) -> Value {
    json!({
        "parameter_space": { "lower": [0.0, 0.05], "upper": [1.0, 0.95] },
        "health_model": { "family": "normal" },
        "horizon": 200,
        "locations": [ { "id": "A" }, { "id": "B" } ],
        "trips": trips,
        "vehicles": [ { "id": "v1", "origin": "A", "initial_params": [1.0, 0.05] } ],
        "degradations": [
            { "id": "wear", "slope": [1.0, 1.0], "offset": [-0.1, 0.1], "lipschitz": 1.0 }
        ],
        "costs": {
            "failure_cost": 100.0,
            "deadhead_cost_per_distance": 1.0,
            "vehicle_usage_cost": 10.0,
            "distance": [[0.0, 5.0], [5.0, 0.0]],
            "travel_time": [[0, 30], [30, 0]]
        }
    })
}

pub fn single_trip_json() -> Value {
    two_location_json(json!([
        { "id": "t1", "dep_time": 10, "arr_time": 40, "dep_loc": "A", "arr_loc": "B",
          "degradation": "wear", "base_cost": 10.0 }
    ]))
}

/// The seeded tiny instances shared by the solution-level checks: up to six
/// trips, two vehicles and three locations, cycling through the families.
pub fn tiny_instances(count: u64) -> Vec<Instance> {
    (0..count)
        .map(|seed| {
            let cfg = GenConfig {
                family: HealthFamily::ALL[(seed % 3) as usize],
                locations: 2 + (seed % 2) as usize,
                trips: 3 + (seed % 4) as usize,
                vehicles: 1 + (seed / 3 % 2) as usize,
                maintenance: seed % 2 == 0,
                profile: DegradationProfile::Random,
                k: 2,
                seed: 1000 + seed,
            };
            generate(&cfg).unwrap()
        })
        .collect()
}

/// Instances whose reachable parameters all lie on the level-`level` grid.
pub fn grid_aligned_instances(count: u64, level: u32) -> Vec<Instance> {
    (0..count)
        .map(|seed| {
            let cfg = GenConfig {
                family: HealthFamily::ALL[(seed % 3) as usize],
                locations: 3,
                trips: 5,
                vehicles: 2,
                maintenance: true,
                profile: DegradationProfile::GridAligned { level },
                k: 2,
                seed: 2000 + seed,
            };
            generate(&cfg).unwrap()
        })
        .collect()
}
