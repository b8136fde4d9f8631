//! Seeded generator of small valid instances.
//!
//! Trips are laid out as per-vehicle chains so every generated timetable is
//! coverable. Parameter boxes keep each family inside one monotonicity
//! region and all degradations have nonnegative slopes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::health::HealthFamily;
use crate::instance::{
    CostConfig, DegradationSpec, Instance, Location, ParameterPoint, ParameterSpace, Trip, Vehicle,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationProfile {
    /// Random wear with slopes in [0.85, 1] and nonpositive health shifts.
    Random,
    /// Pure shifts by whole cells of the level-`level` grid; together with
    /// grid-valued initial and reset parameters every reachable parameter
    /// lies on that grid.
    GridAligned { level: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: HealthFamily,
    pub locations: usize,
    pub trips: usize,
    pub vehicles: usize,
    pub maintenance: bool,
    pub profile: DegradationProfile,
    /// Subdivision factor the grid-aligned profile refers to.
    pub k: u32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            family: HealthFamily::Normal,
            locations: 3,
            trips: 5,
            vehicles: 2,
            maintenance: true,
            profile: DegradationProfile::Random,
            k: 2,
            seed: 0,
        }
    }
}

struct Family {
    lower: [f64; 2],
    upper: [f64; 2],
    /// Per-axis direction of wear: −1 when wear lowers the value.
    wear: [f64; 2],
    mileages: &'static [f64],
}

fn family_box(family: HealthFamily) -> Family {
    match family {
        // μ ≥ 0 keeps the normal family in one region; wear lowers the mean
        // and raises the variance.
        HealthFamily::Normal => Family {
            lower: [0.0, 0.25],
            upper: [4.0, 4.0],
            wear: [-1.0, 1.0],
            mileages: &[],
        },
        // λ above every mileage keeps the Weibull family in one region.
        HealthFamily::Weibull => Family {
            lower: [1.0, 100.0],
            upper: [4.0, 300.0],
            wear: [-1.0, -1.0],
            mileages: &[30.0, 60.0, 90.0],
        },
        HealthFamily::Gamma => Family {
            lower: [1.0, 10.0],
            upper: [5.0, 60.0],
            wear: [-1.0, -1.0],
            mileages: &[5.0, 15.0, 30.0],
        },
    }
}

/// Generates an instance; the same config always yields the same instance.
pub fn generate(config: &GenConfig) -> Result<Instance> {
    if config.locations == 0 || config.vehicles == 0 {
        return Err(Error::Invariant("need at least one location and one vehicle".into()));
    }
    if config.k < 2 {
        return Err(Error::Invariant("k must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fam = family_box(config.family);
    let space = ParameterSpace::new(fam.lower.to_vec(), fam.upper.to_vec())?;
    let widths = space.widths();
    let nl = config.locations;

    // Cells per axis for the aligned profile; zero draws continuous values.
    let cells = match config.profile {
        DegradationProfile::GridAligned { level } => config.k.pow(level),
        DegradationProfile::Random => 0,
    };
    let on_grid = |rng: &mut ChaCha8Rng, lo_frac: f64| -> ParameterPoint {
        ParameterPoint(
            (0..2)
                .map(|j| {
                    let u = if cells == 0 {
                        rng.random_range(lo_frac..=1.0)
                    } else {
                        let first = (lo_frac * cells as f64).ceil() as u32;
                        f64::from(rng.random_range(first..=cells)) / f64::from(cells)
                    };
                    // Healthy means high where wear lowers the value.
                    let u = if fam.wear[j] < 0.0 { u } else { 1.0 - u };
                    space.lower[j] + u * widths[j]
                })
                .collect(),
        )
    };

    let mut degradations = Vec::new();
    for d in 0..3 {
        let (slope, offset): (Vec<f64>, Vec<f64>) = (0..2)
            .map(|j| match config.profile {
                DegradationProfile::Random => {
                    let a: f64 = rng.random_range(0.85..=1.0);
                    let shift = rng.random_range(0.0..=0.15) * widths[j];
                    // Contract towards the worn end of the box, then shift.
                    let anchor = if fam.wear[j] < 0.0 { space.lower[j] } else { space.upper[j] };
                    (a, (1.0 - a) * anchor + fam.wear[j] * shift)
                }
                DegradationProfile::GridAligned { .. } => {
                    let steps = rng.random_range(0..=1) as f64;
                    (1.0, fam.wear[j] * steps * widths[j] / f64::from(cells))
                }
            })
            .unzip();
        let lipschitz = slope.iter().fold(0.0_f64, |m, a| m.max(a.abs())).max(1.0);
        degradations.push(DegradationSpec {
            id: format!("d{d}"),
            slope,
            offset,
            lipschitz,
        });
    }

    let mut locations: Vec<Location> = (0..nl)
        .map(|l| Location {
            id: format!("L{l}"),
            is_maintenance: false,
            reset_params: None,
            service_duration: 0,
            maintenance_cost: 0.0,
        })
        .collect();
    if config.maintenance {
        let m = nl - 1;
        locations[m].is_maintenance = true;
        locations[m].reset_params = Some(on_grid(&mut rng, 0.75));
        locations[m].service_duration = rng.random_range(5..=20);
        locations[m].maintenance_cost = f64::from(rng.random_range(20..=80));
    }

    let mut travel_time = vec![vec![0u32; nl]; nl];
    let mut distance = vec![vec![0.0; nl]; nl];
    for a in 0..nl {
        for b in a + 1..nl {
            let tt = rng.random_range(5..=30);
            travel_time[a][b] = tt;
            travel_time[b][a] = tt;
            let d = f64::from(rng.random_range(2..=20));
            distance[a][b] = d;
            distance[b][a] = d;
        }
    }

    let vehicles: Vec<Vehicle> = (0..config.vehicles)
        .map(|v| Vehicle {
            id: format!("V{v}"),
            origin: rng.random_range(0..nl),
            initial_params: on_grid(&mut rng, 0.5),
        })
        .collect();

    // One chain per vehicle: each trip leaves where the previous one ended.
    let mut position: Vec<(usize, u32)> = vehicles.iter().map(|v| (v.origin, 0)).collect();
    let mut trips = Vec::new();
    for t in 0..config.trips {
        let v = t % config.vehicles;
        let (l, now) = position[v];
        let dep = now + rng.random_range(5..=40);
        let arr = dep + rng.random_range(10..=60);
        let to = if nl == 1 {
            l
        } else {
            (l + rng.random_range(1..nl)) % nl
        };
        let mileage = if fam.mileages.is_empty() {
            0.0
        } else {
            fam.mileages[rng.random_range(0..fam.mileages.len())]
        };
        trips.push(Trip {
            id: format!("T{t}"),
            dep_time: dep,
            arr_time: arr,
            dep_loc: l,
            arr_loc: to,
            n_vehicles: 1,
            degradation: rng.random_range(0..degradations.len()),
            base_cost: f64::from(rng.random_range(10..=50)),
            mileage,
        });
        position[v] = (to, arr);
    }
    let horizon = position.iter().map(|p| p.1).max().unwrap_or(0) + 60;

    let instance = Instance {
        parameter_space: space,
        family: config.family,
        wait_degradation: None,
        deadhead_degradation: None,
        horizon,
        locations,
        trips,
        vehicles,
        degradations,
        costs: CostConfig {
            failure_cost: 1000.0,
            deadhead_cost_per_distance: 1.0,
            vehicle_usage_cost: 100.0,
            distance,
            travel_time,
        },
    };
    // Round-trip through the file format so the result is validated exactly
    // like a loaded instance.
    Instance::from_json(&instance.to_json()?)
}
