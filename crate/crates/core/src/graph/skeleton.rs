//! The parameter-independent event structure of an instance.
//!
//! A slot is one (location, time) event. Every graph node lives on a slot;
//! which moves exist between slots does not depend on the discretization, so
//! the graph builders and the enumeration oracle share this skeleton.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::instance::Instance;

pub type SlotId = usize;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Slot {
    pub location: usize,
    /// Minutes; end slots carry `horizon + 1`.
    pub time: u32,
    pub start: bool,
    pub end: bool,
    pub departure: bool,
    pub arrival: bool,
    pub maintenance: bool,
}

impl Slot {
    /// Slots that carry a node for every parameter value.
    pub fn is_full(&self) -> bool {
        self.start || self.end || self.departure || self.arrival
    }

    pub fn is_trip_event(&self) -> bool {
        self.departure || self.arrival
    }

    fn is_deadhead_source(&self) -> bool {
        !self.end && (self.start || self.arrival || self.maintenance)
    }

    fn is_deadhead_target(&self) -> bool {
        self.end || self.departure
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MaintenanceLink {
    pub from: SlotId,
    pub workshop: usize,
    pub to: SlotId,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skeleton {
    /// Sorted by (location, time).
    pub slots: Vec<Slot>,
    /// Chronological slots per location.
    pub by_location: Vec<Vec<SlotId>>,
    /// (departure slot, arrival slot) per trip.
    pub trip_slots: Vec<(SlotId, SlotId)>,
    /// Next slot at the same location.
    pub next_wait: Vec<Option<SlotId>>,
    pub deadheads: Vec<(SlotId, SlotId)>,
    pub maintenance: Vec<MaintenanceLink>,
    pub start_slot: Vec<SlotId>,
    pub end_slot: Vec<SlotId>,
}

fn slot_mut(keys: &mut BTreeMap<(usize, u32), Slot>, l: usize, t: u32) -> &mut Slot {
    keys.entry((l, t)).or_insert_with(|| Slot {
        location: l,
        time: t,
        ..Slot::default()
    })
}

impl Skeleton {
    pub fn new(instance: &Instance) -> Self {
        let nl = instance.n_locations();
        let end = instance.end_time();
        let mut keys: BTreeMap<(usize, u32), Slot> = BTreeMap::new();
        for l in 0..nl {
            slot_mut(&mut keys, l, 0).start = true;
            slot_mut(&mut keys, l, end).end = true;
        }
        for t in &instance.trips {
            slot_mut(&mut keys, t.dep_loc, t.dep_time).departure = true;
            slot_mut(&mut keys, t.arr_loc, t.arr_time).arrival = true;
        }
        let events: Vec<(usize, u32)> = keys
            .values()
            .filter(|s| s.is_trip_event())
            .map(|s| (s.location, s.time))
            .collect();
        let mut maint_keys = Vec::new();
        for &(l, k) in &events {
            for m in instance.maintenance_locations() {
                let t = u64::from(k)
                    + u64::from(instance.costs.travel_time[l][m])
                    + u64::from(instance.locations[m].service_duration);
                if t <= u64::from(instance.horizon) {
                    maint_keys.push(((l, k), m, t as u32));
                }
            }
        }
        for &(_, m, t) in &maint_keys {
            slot_mut(&mut keys, m, t).maintenance = true;
        }

        let slots: Vec<Slot> = keys.into_values().collect();
        let id_of = |l: usize, t: u32| -> SlotId {
            slots
                .binary_search_by(|s| (s.location, s.time).cmp(&(l, t)))
                .expect("slot exists")
        };

        let mut by_location = vec![Vec::new(); nl];
        for (i, s) in slots.iter().enumerate() {
            by_location[s.location].push(i);
        }
        let mut next_wait = vec![None; slots.len()];
        for list in &by_location {
            for w in list.windows(2) {
                next_wait[w[0]] = Some(w[1]);
            }
        }
        let trip_slots = instance
            .trips
            .iter()
            .map(|t| (id_of(t.dep_loc, t.dep_time), id_of(t.arr_loc, t.arr_time)))
            .collect();
        let maintenance = maint_keys
            .iter()
            .map(|&((l, k), m, t)| MaintenanceLink {
                from: id_of(l, k),
                workshop: m,
                to: id_of(m, t),
            })
            .collect();
        let start_slot = (0..nl).map(|l| id_of(l, 0)).collect();
        let end_slot = (0..nl).map(|l| id_of(l, end)).collect();

        let mut sk = Skeleton {
            slots,
            by_location,
            trip_slots,
            next_wait,
            deadheads: Vec::new(),
            maintenance,
            start_slot,
            end_slot,
        };
        sk.deadheads = sk.deadhead_links(instance);
        sk
    }

    // End slots stand for "after the horizon" and are reachable from anywhere.
    fn reach_time(&self, s: SlotId) -> u64 {
        let slot = &self.slots[s];
        if slot.end {
            u64::MAX
        } else {
            u64::from(slot.time)
        }
    }

    /// First deadhead target (departure or end slot) at `to_location` that a
    /// vehicle leaving slot `from` can reach.
    pub fn first_after(&self, instance: &Instance, from: SlotId, to_location: usize) -> Option<SlotId> {
        let s = &self.slots[from];
        if s.end {
            return None;
        }
        let ready = u64::from(s.time) + u64::from(instance.costs.travel_time[s.location][to_location]);
        self.by_location[to_location]
            .iter()
            .copied()
            .find(|&c| self.slots[c].is_deadhead_target() && self.reach_time(c) >= ready)
    }

    /// Chronologically last deadhead source (start, arrival or maintenance
    /// slot) at `from_location` from which slot `to` can be reached.
    pub fn last_before(&self, instance: &Instance, to: SlotId, from_location: usize) -> Option<SlotId> {
        let target = self.reach_time(to);
        let tt = u64::from(instance.costs.travel_time[from_location][self.slots[to].location]);
        self.by_location[from_location]
            .iter()
            .rev()
            .copied()
            .find(|&c| {
                let s = &self.slots[c];
                s.is_deadhead_source() && u64::from(s.time) + tt <= target
            })
    }

    fn deadhead_links(&self, instance: &Instance) -> Vec<(SlotId, SlotId)> {
        let mut links = Vec::new();
        for (s1, slot) in self.slots.iter().enumerate() {
            if !slot.is_deadhead_source() {
                continue;
            }
            for l2 in 0..instance.n_locations() {
                if l2 == slot.location {
                    continue;
                }
                if let Some(s2) = self.first_after(instance, s1, l2) {
                    if self.last_before(instance, s2, slot.location) == Some(s1) {
                        links.push((s1, s2));
                    }
                }
            }
        }
        links
    }

    /// Slot ids in nondecreasing time order (every move strictly increases time).
    pub fn time_order(&self) -> Vec<SlotId> {
        let mut order: Vec<SlotId> = (0..self.slots.len()).collect();
        order.sort_by_key(|&s| (self.slots[s].time, self.slots[s].location));
        order
    }

    pub fn trips_departing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.slots.len()];
        for (t, (dep, _)) in self.trip_slots.iter().enumerate() {
            out[*dep].push(t);
        }
        out
    }
}
