//! Nested grid discretizations of the unit cube and the directed rounding function.
//!
//! Level i with factor k holds the per-axis values {j/kⁱ : 0 ≤ j ≤ kⁱ}
//! together with the coordinates of region boundary hyperplanes. Every value
//! is computed as an integer quotient so that D_i ⊆ D_{i+1} holds bit for bit.
//!
//! Rounding maps θ to the closest grid point inside the cone C(θ, −R):
//! coordinates with sign +1 may only decrease, those with sign −1 may only
//! increase. Because the grid is a product set and the cone a product of
//! half-lines, the Euclidean argmin separates into one directed rounding per
//! axis.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::health::{MonotonicityRegion, RegionSet};
use crate::instance::{ParameterPoint, ParameterSpace};

/// Distance (in unit coordinates) below which a value snaps onto a grid line.
pub const SNAP_TOL: f64 = 1e-13;
/// Largest number of grid points a discretization may hold.
pub const MAX_POINTS: usize = 50_000_000;

/// Index of a point in a discretization (row-major over the axes).
pub type StateId = usize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discretization {
    level: u32,
    k: u32,
    /// Boundary hyperplanes (axis, unit coordinate) inserted into the grid.
    boundaries: Vec<(usize, f64)>,
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

/// √n / kⁱ, the largest rounding displacement at level i.
pub fn epsilon_bound(level: u32, k: u32, n: usize) -> f64 {
    (n as f64).sqrt() / f64::from(k).powi(level as i32)
}

impl Discretization {
    /// Builds level `level` for an `n`-dimensional unit cube.
    pub fn new(level: u32, k: u32, n: usize, boundaries: &[(usize, f64)]) -> Result<Self> {
        if k < 2 {
            return Err(Error::Invariant(format!("subdivision factor k must be >= 2, got {k}")));
        }
        if n == 0 {
            return Err(Error::Invariant("discretization needs n >= 1".into()));
        }
        let cells = u64::from(k)
            .checked_pow(level)
            .filter(|c| *c < (1 << 40))
            .ok_or_else(|| Error::Invariant(format!("level {level} with k={k} is too fine")))?;

        let mut kept = Vec::new();
        for &(axis, c) in boundaries {
            if axis >= n || !(0.0..=1.0).contains(&c) {
                log::warn!("ignoring boundary hyperplane on axis {axis} at unit coordinate {c}");
                continue;
            }
            kept.push((axis, c));
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        kept.dedup();

        let mut axes = Vec::with_capacity(n);
        for axis in 0..n {
            let mut values: Vec<f64> = (0..=cells).map(|j| j as f64 / cells as f64).collect();
            values.extend(kept.iter().filter(|(a, _)| *a == axis).map(|(_, c)| *c));
            values.sort_by(f64::total_cmp);
            values.dedup();
            axes.push(values);
        }

        let mut strides = vec![1usize; n];
        let mut total = 1usize;
        for axis in (0..n).rev() {
            strides[axis] = total;
            total = total
                .checked_mul(axes[axis].len())
                .filter(|t| *t <= MAX_POINTS)
                .ok_or_else(|| Error::Invariant(format!("level {level} exceeds {MAX_POINTS} grid points")))?;
        }
        Ok(Discretization {
            level,
            k,
            boundaries: kept,
            axes,
            strides,
        })
    }

    /// Level `level` with the boundary hyperplanes of `regions`, scaled into `space`.
    pub fn for_regions(level: u32, k: u32, space: &ParameterSpace, regions: &RegionSet) -> Result<Self> {
        let planes: Vec<(usize, f64)> = regions
            .hyperplanes()
            .into_iter()
            .filter(|(axis, _)| *axis < space.dim())
            .map(|(axis, v)| (axis, space.axis_to_unit(axis, v)))
            // Region splits outside the box do not affect it.
            .filter(|(_, c)| (0.0..=1.0).contains(c))
            .collect();
        Discretization::new(level, k, space.dim(), &planes)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn boundaries(&self) -> &[(usize, f64)] {
        &self.boundaries
    }

    /// Sorted grid values on `axis`.
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_bound(self.level, self.k, self.dim())
    }

    /// Same factor and hyperplanes, one level finer.
    pub fn refine(&self) -> Result<Self> {
        Discretization::new(self.level + 1, self.k, self.dim(), &self.boundaries)
    }

    /// Per-axis indices of a state.
    pub fn indices(&self, id: StateId) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(s, a)| (id / s) % a.len())
            .collect()
    }

    pub fn id_of_indices(&self, idx: &[usize]) -> StateId {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Unit coordinates of a state.
    pub fn point(&self, id: StateId) -> Vec<f64> {
        self.indices(id)
            .iter()
            .zip(&self.axes)
            .map(|(i, a)| a[*i])
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|id| self.point(id))
    }

    /// Exact membership of a unit-coordinate point.
    pub fn index_of(&self, unit: &[f64]) -> Option<StateId> {
        if unit.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(unit.len());
        for (x, values) in unit.iter().zip(&self.axes) {
            idx.push(values.binary_search_by(|v| v.total_cmp(x)).ok()?);
        }
        Some(self.id_of_indices(&idx))
    }

    pub fn contains(&self, unit: &[f64]) -> bool {
        self.index_of(unit).is_some()
    }

    /// Rounds a unit-coordinate point into D ∩ C(θ, −R) for the sign vector `signs`.
    pub fn round_down(&self, unit: &[f64], signs: &[i8]) -> Result<StateId> {
        let mut idx = Vec::with_capacity(unit.len());
        for ((x, values), s) in unit.iter().zip(&self.axes).zip(signs) {
            let i = round_axis(values, *x, *s).ok_or_else(|| Error::NotSuitable(unit.to_vec()))?;
            idx.push(i);
        }
        Ok(self.id_of_indices(&idx))
    }
}

// Nearest grid value on one axis in the allowed direction; values within
// SNAP_TOL of a grid line snap onto it.
fn round_axis(values: &[f64], x: f64, sign: i8) -> Option<usize> {
    if x.is_nan() {
        return None;
    }
    let pos = values.partition_point(|v| *v < x);
    for cand in [pos.checked_sub(1), Some(pos)].into_iter().flatten() {
        if let Some(v) = values.get(cand) {
            if (v - x).abs() <= SNAP_TOL {
                return Some(cand);
            }
        }
    }
    if sign > 0 {
        // largest value ≤ x
        pos.checked_sub(1)
    } else {
        // smallest value ≥ x
        (pos < values.len()).then_some(pos)
    }
}

/// Rounding in instance coordinates: region selection, scaling and grid lookup.
#[derive(Clone, Debug)]
pub struct GridRounder<'a> {
    pub space: &'a ParameterSpace,
    pub grid: &'a Discretization,
    pub regions: &'a RegionSet,
}

impl GridRounder<'_> {
    pub fn region(&self, theta: &ParameterPoint, alpha: Option<f64>) -> &MonotonicityRegion {
        self.regions.region_of(&theta.0, alpha)
    }

    pub fn round(&self, theta: &ParameterPoint, alpha: Option<f64>) -> Result<StateId> {
        let region = self.region(theta, alpha);
        let unit = self.space.to_unit(&self.space.clamp(theta));
        self.grid.round_down(&unit.0, &region.signs)
    }

    /// Instance coordinates of a grid point.
    pub fn theta(&self, id: StateId) -> ParameterPoint {
        self.space.from_unit(&ParameterPoint(self.grid.point(id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(d: &Discretization, unit: &[f64], signs: &[i8]) -> Option<StateId> {
        let mut best: Option<(f64, StateId)> = None;
        for id in 0..d.len() {
            let p = d.point(id);
            let in_cone = p.iter().zip(unit).zip(signs).all(|((p, x), s)| {
                if *s > 0 {
                    *p <= *x
                } else {
                    *p >= *x
                }
            });
            if !in_cone {
                continue;
            }
            let dist: f64 = p.iter().zip(unit).map(|(a, b)| (a - b) * (a - b)).sum();
            // ids are in lexicographic order, so strict comparison keeps the smallest on ties
            if best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, id));
            }
        }
        best.map(|(_, id)| id)
    }

    #[test]
    fn point_counts() {
        assert_eq!(Discretization::new(0, 2, 2, &[]).unwrap().len(), 4);
        assert_eq!(Discretization::new(1, 2, 2, &[(0, 0.0)]).unwrap().len(), 9);
        let w = Discretization::new(1, 2, 2, &[(1, 0.7)]).unwrap();
        assert_eq!(w.axis(1), &[0.0, 0.5, 0.7, 1.0]);
        assert_eq!(w.len(), 12);
        for i in 0..5 {
            assert_eq!(Discretization::new(i, 3, 2, &[]).unwrap().len(), (3usize.pow(i) + 1).pow(2));
        }
    }

    #[test]
    fn out_of_range_boundaries_are_ignored() {
        let d = Discretization::new(1, 2, 2, &[(1, 1.5), (0, -0.2)]).unwrap();
        assert_eq!(d.len(), 9);
        assert!(d.boundaries().is_empty());
    }

    #[test]
    fn refinement_nests() {
        let d = Discretization::new(2, 2, 2, &[(1, 0.3)]).unwrap();
        let r = d.refine().unwrap();
        assert_eq!(r.level(), 3);
        assert!(d.points().all(|p| r.contains(&p)));
    }

    #[test]
    fn worked_rounding_examples() {
        let d = Discretization::new(1, 2, 2, &[]).unwrap();
        let a = d.round_down(&[0.3, 0.4], &[-1, 1]).unwrap();
        assert_eq!(d.point(a), vec![0.5, 0.0]);
        let b = d.round_down(&[0.3, 0.4], &[-1, -1]).unwrap();
        assert_eq!(d.point(b), vec![0.5, 0.5]);
        let c = d.round_down(&[0.5, 1.0], &[1, -1]).unwrap();
        assert_eq!(d.point(c), vec![0.5, 1.0]);
    }

    #[test]
    fn epsilon_values() {
        assert!((epsilon_bound(0, 2, 2) - 2f64.sqrt()).abs() < 1e-15);
        assert!((epsilon_bound(3, 2, 2) - 2f64.sqrt() / 8.0).abs() < 1e-15);
        assert!((epsilon_bound(2, 10, 1) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_argmin() {
        let d = Discretization::new(2, 2, 2, &[(0, 0.3), (1, 0.61)]).unwrap();
        let mut x = 0.013;
        for _ in 0..400 {
            x = (x * 7.31 + 0.137) % 1.0;
            let y = (x * 13.7 + 0.29) % 1.0;
            for signs in [[1, 1], [1, -1], [-1, 1], [-1, -1]] {
                let got = d.round_down(&[x, y], &signs).unwrap();
                assert_eq!(Some(got), brute_force(&d, &[x, y], &signs));
            }
        }
    }
}
