//! The completely expanded event-graph: every exactly reachable parameter
//! becomes a state and no rounding takes place.

use std::collections::{HashMap, HashSet};

use super::{build_graph, Seeg, Skeleton, StateSpace};
use crate::discretization::StateId;
use crate::error::{Error, Result};
use crate::instance::{Instance, ParameterPoint};

pub const DEFAULT_CEEG_CAP: usize = 100_000;

fn key(theta: &ParameterPoint) -> Vec<u64> {
    theta.0.iter().map(|x| x.to_bits()).collect()
}

/// All parameter values reachable by some vehicle, sorted lexicographically.
///
/// Values are propagated forward over the event skeleton in time order with
/// the exact degradation functions.
pub fn ceeg_states(instance: &Instance, cap: usize) -> Result<Vec<ParameterPoint>> {
    let sk = Skeleton::new(instance);
    let departing = sk.trips_departing();
    let mut reach: Vec<Vec<ParameterPoint>> = vec![Vec::new(); sk.slots.len()];
    let mut seen: Vec<HashSet<Vec<u64>>> = vec![HashSet::new(); sk.slots.len()];
    let mut all: HashMap<Vec<u64>, ParameterPoint> = HashMap::new();

    let mut add = |slot: usize, theta: ParameterPoint, reach: &mut Vec<Vec<ParameterPoint>>| -> Result<()> {
        let k = key(&theta);
        if seen[slot].insert(k.clone()) {
            all.entry(k).or_insert_with(|| theta.clone());
            if all.len() > cap {
                return Err(Error::CeegTooLarge { size: all.len(), cap });
            }
            reach[slot].push(theta);
        }
        Ok(())
    };

    for v in &instance.vehicles {
        add(sk.start_slot[v.origin], v.initial_params.clone(), &mut reach)?;
    }
    let mut deadheads_from: Vec<Vec<usize>> = vec![Vec::new(); sk.slots.len()];
    for &(s1, s2) in &sk.deadheads {
        deadheads_from[s1].push(s2);
    }
    let mut maint_from: Vec<Vec<(usize, usize)>> = vec![Vec::new(); sk.slots.len()];
    for link in &sk.maintenance {
        maint_from[link.from].push((link.workshop, link.to));
    }

    for slot in sk.time_order() {
        let current = std::mem::take(&mut reach[slot]);
        for theta in &current {
            for &t in &departing[slot] {
                add(sk.trip_slots[t].1, instance.apply_trip(t, theta), &mut reach)?;
            }
            if let Some(next) = sk.next_wait[slot] {
                add(next, instance.apply_wait(theta), &mut reach)?;
            }
            for &s2 in &deadheads_from[slot] {
                add(s2, instance.apply_deadhead(theta), &mut reach)?;
            }
        }
        if !current.is_empty() {
            for &(m, to) in &maint_from[slot] {
                let reset = instance.locations[m].reset_params.clone().expect("workshops have reset parameters");
                add(to, reset, &mut reach)?;
            }
        }
        reach[slot] = current;
    }

    let mut states: Vec<ParameterPoint> = all.into_values().collect();
    states.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(states)
}

struct ExactStates {
    thetas: Vec<ParameterPoint>,
    index: HashMap<Vec<u64>, StateId>,
}

impl StateSpace for ExactStates {
    fn len(&self) -> usize {
        self.thetas.len()
    }

    fn theta(&self, id: StateId) -> ParameterPoint {
        self.thetas[id].clone()
    }

    fn round(&self, theta: &ParameterPoint, _alpha: Option<f64>) -> Result<Option<StateId>> {
        Ok(self.index.get(&key(theta)).copied())
    }
}

/// Builds the CEEG; fails with `CeegTooLarge` when more than `cap` distinct
/// parameter values are reachable.
pub fn build_ceeg(instance: &Instance, cap: usize) -> Result<Seeg> {
    let thetas = ceeg_states(instance, cap)?;
    let index = thetas.iter().enumerate().map(|(i, t)| (key(t), i)).collect();
    build_graph(instance, &ExactStates { thetas, index })
}
