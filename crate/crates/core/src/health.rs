//! Failure-probability models, their gradients and directional-monotonicity regions.
//!
//! All three families are two-dimensional:
//!
//! * `normal`: θ = (μ, σ²), P_f = P[X ≤ 0] for X ~ N(μ, σ²).
//! * `weibull`: θ = (κ, λ), P_f = P[X ≤ α] = 1 − exp(−(α/λ)^κ).
//! * `gamma`: θ = (κ, λ), P_f = P(κ, α/λ), the regularized lower incomplete gamma function.
//!
//! For the reliability families α is the mileage of the service being priced.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{DegradationSpec, Instance, ParameterPoint, ParameterSpace};
use crate::special;

/// Slack used by the alignment and ordering checks.
pub const ORDER_TOL: f64 = 1e-12;
/// Smallest directional derivative still counted as nonnegative.
pub const DERIVATIVE_TOL: f64 = 1e-10;
/// Grid resolution of the gamma shape-monotonicity guard.
const GAMMA_GUARD_GRID: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthFamily {
    Normal,
    Weibull,
    Gamma,
}

impl fmt::Display for HealthFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HealthFamily::Normal => "normal",
            HealthFamily::Weibull => "weibull",
            HealthFamily::Gamma => "gamma",
        })
    }
}

impl HealthFamily {
    pub const ALL: [HealthFamily; 3] = [HealthFamily::Normal, HealthFamily::Weibull, HealthFamily::Gamma];

    /// Weibull and gamma price a service through its mileage α.
    pub fn is_reliability(self) -> bool {
        !matches!(self, HealthFamily::Normal)
    }

    pub fn dim(self) -> usize {
        2
    }

    fn check_args(self, theta: &[f64], alpha: Option<f64>) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::Model(format!("{self} expects 2 parameters, got {}", theta.len())));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model(format!("non-finite parameters {theta:?}")));
        }
        match self {
            HealthFamily::Normal => {
                if theta[1] <= 0.0 {
                    return Err(Error::Model(format!("variance must be > 0, got {}", theta[1])));
                }
                if alpha.is_some() {
                    return Err(Error::Model("the normal family takes no mileage".into()));
                }
            }
            HealthFamily::Weibull | HealthFamily::Gamma => {
                if theta[0] <= 0.0 || theta[1] <= 0.0 {
                    return Err(Error::Model(format!("{self} needs κ, λ > 0, got {theta:?}")));
                }
                match alpha {
                    Some(a) if a > 0.0 && a.is_finite() => {}
                    Some(a) => return Err(Error::Model(format!("mileage must be > 0, got {a}"))),
                    None => return Err(Error::Model(format!("{self} needs a mileage α"))),
                }
            }
        }
        Ok(())
    }

    /// Failure probability P_f(θ) (normal) or P_f(α, θ) (Weibull, gamma).
    pub fn failure_probability(self, theta: &[f64], alpha: Option<f64>) -> Result<f64> {
        self.check_args(theta, alpha)?;
        Ok(self.pf(theta, alpha.unwrap_or(0.0)))
    }

    // Unchecked evaluation; callers guarantee valid arguments.
    pub(crate) fn pf(self, theta: &[f64], alpha: f64) -> f64 {
        match self {
            HealthFamily::Normal => {
                let (mu, var) = (theta[0], theta[1]);
                0.5 * special::erfc(mu / (2.0 * var).sqrt())
            }
            HealthFamily::Weibull => {
                let xk = (alpha / theta[1]).powf(theta[0]);
                -libm::expm1(-xk)
            }
            HealthFamily::Gamma => special::gamma_p(theta[0], alpha / theta[1]),
        }
    }

    /// Analytic gradient of P_f with respect to θ.
    pub fn gradient(self, theta: &[f64], alpha: Option<f64>) -> Result<Vec<f64>> {
        self.check_args(theta, alpha)?;
        Ok(self.grad(theta, alpha.unwrap_or(0.0)).to_vec())
    }

    pub(crate) fn grad(self, theta: &[f64], alpha: f64) -> [f64; 2] {
        match self {
            HealthFamily::Normal => {
                let (mu, var) = (theta[0], theta[1]);
                let sigma = var.sqrt();
                let e = (-mu * mu / (2.0 * var)).exp();
                let d_mu = -e / (2.0 * PI * var).sqrt();
                let d_var = mu * e / (2.0 * sigma * var * (2.0 * PI).sqrt());
                [d_mu, d_var]
            }
            HealthFamily::Weibull => {
                let (kappa, lambda) = (theta[0], theta[1]);
                let x = alpha / lambda;
                let xk = x.powf(kappa);
                let e = (-xk).exp();
                [e * xk * x.ln(), -e * kappa * xk / lambda]
            }
            HealthFamily::Gamma => {
                let (kappa, lambda) = (theta[0], theta[1]);
                let x = alpha / lambda;
                let d_lambda = -(kappa * x.ln() - x - special::ln_gamma(kappa)).exp() / lambda;
                [special::gamma_p_da(kappa, x), d_lambda]
            }
        }
    }
}

/// Rejects boxes on which the family is undefined.
pub fn check_space(family: HealthFamily, space: &ParameterSpace) -> Result<()> {
    if space.dim() != family.dim() {
        return Err(Error::Invariant(format!(
            "the {family} family needs a {}-dimensional parameter space",
            family.dim()
        )));
    }
    match family {
        HealthFamily::Normal if space.lower[1] <= 0.0 => Err(Error::Invariant(
            "the normal family needs a variance lower bound > 0".into(),
        )),
        HealthFamily::Weibull | HealthFamily::Gamma if space.lower[0] <= 0.0 || space.lower[1] <= 0.0 => {
            Err(Error::Invariant(format!("the {family} family needs κ, λ lower bounds > 0")))
        }
        _ => Ok(()),
    }
}

/// Instance-level model checks run at load time.
///
/// For gamma the shape derivative ∂P_f/∂κ is assumed negative; this is
/// verified on a grid over the box for every trip mileage.
pub fn check_instance_model(instance: &Instance) -> Result<()> {
    if instance.family != HealthFamily::Gamma {
        return Ok(());
    }
    let space = &instance.parameter_space;
    for alpha in instance.alpha_set() {
        for a in 0..GAMMA_GUARD_GRID {
            for b in 0..GAMMA_GUARD_GRID {
                let u = [
                    a as f64 / (GAMMA_GUARD_GRID - 1) as f64,
                    b as f64 / (GAMMA_GUARD_GRID - 1) as f64,
                ];
                let theta = space.from_unit(&ParameterPoint(u.to_vec()));
                let d = HealthFamily::Gamma.grad(&theta.0, alpha)[0];
                if d > 0.0 {
                    return Err(Error::Invariant(format!(
                        "gamma shape monotonicity fails at θ={:?}, α={alpha} (∂P_f/∂κ = {d:e})",
                        theta.0
                    )));
                }
            }
        }
    }
    Ok(())
}

/// A closed axis-aligned region B on which P_f increases along every
/// direction sⱼeⱼ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityRegion {
    /// Rank in the P_f order; smaller ranks carry smaller failure probabilities.
    pub rank: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub signs: Vec<i8>,
    /// Mileage the region was derived for (reliability families).
    pub alpha: Option<f64>,
}

impl MonotonicityRegion {
    fn new(rank: usize, lower: [f64; 2], upper: [f64; 2], signs: [i8; 2], alpha: Option<f64>) -> Self {
        MonotonicityRegion {
            rank,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            signs: signs.to_vec(),
            alpha,
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// The direction Σ wⱼ sⱼ eⱼ for convex weights w.
    pub fn direction(&self, weights: &[f64]) -> Vec<f64> {
        self.signs.iter().zip(weights).map(|(s, w)| f64::from(*s) * w).collect()
    }

    /// Intersection with a box, or `None` when empty.
    pub fn clip(&self, space: &ParameterSpace) -> Option<(Vec<f64>, Vec<f64>)> {
        let lo: Vec<f64> = self.lower.iter().zip(&space.lower).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.upper.iter().zip(&space.upper).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some((lo, hi))
    }
}

/// The ordered regions of one mileage (or of the normal family).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionGroup {
    pub alpha: Option<f64>,
    pub regions: Vec<MonotonicityRegion>,
}

impl RegionGroup {
    /// First region, in rank order, whose closed bounds contain θ.
    pub fn region_of(&self, theta: &[f64]) -> &MonotonicityRegion {
        self.regions
            .iter()
            .find(|r| r.contains(theta))
            .unwrap_or_else(|| self.regions.last().expect("region groups are nonempty"))
    }
}

fn family_regions(family: HealthFamily, alpha: Option<f64>) -> Vec<MonotonicityRegion> {
    let inf = f64::INFINITY;
    match family {
        HealthFamily::Normal => vec![
            MonotonicityRegion::new(0, [0.0, -inf], [inf, inf], [-1, 1], None),
            MonotonicityRegion::new(1, [-inf, -inf], [0.0, inf], [-1, -1], None),
        ],
        HealthFamily::Weibull => {
            let a = alpha.expect("weibull regions need a mileage");
            vec![
                MonotonicityRegion::new(0, [-inf, a], [inf, inf], [-1, -1], alpha),
                MonotonicityRegion::new(1, [-inf, -inf], [inf, a], [1, -1], alpha),
            ]
        }
        HealthFamily::Gamma => vec![MonotonicityRegion::new(0, [-inf, -inf], [inf, inf], [-1, -1], alpha)],
    }
}

/// Monotonicity regions for every mileage of a timetable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSet {
    pub family: HealthFamily,
    pub groups: Vec<RegionGroup>,
}

impl RegionSet {
    /// Regions for the given distinct mileages (ignored for normal).
    pub fn new(family: HealthFamily, alphas: &[f64]) -> Result<Self> {
        let groups = if family.is_reliability() {
            if alphas.is_empty() {
                return Err(Error::Model(format!("the {family} family needs at least one mileage")));
            }
            let mut sorted = alphas.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            sorted
                .into_iter()
                .map(|a| RegionGroup {
                    alpha: Some(a),
                    regions: family_regions(family, Some(a)),
                })
                .collect()
        } else {
            vec![RegionGroup {
                alpha: None,
                regions: family_regions(family, None),
            }]
        };
        Ok(RegionSet { family, groups })
    }

    /// Regions for an instance. A reliability instance without trips never
    /// prices a failure, so a single all-decreasing cone is used.
    pub fn for_instance(instance: &Instance) -> Self {
        let alphas = instance.alpha_set();
        if instance.family.is_reliability() && alphas.is_empty() {
            return RegionSet {
                family: instance.family,
                groups: vec![RegionGroup {
                    alpha: None,
                    regions: vec![MonotonicityRegion::new(
                        0,
                        [f64::NEG_INFINITY; 2],
                        [f64::INFINITY; 2],
                        [-1, -1],
                        None,
                    )],
                }],
            };
        }
        RegionSet::new(instance.family, &alphas).expect("mileages are present")
    }

    /// Group for mileage `alpha`; the largest mileage when `alpha` is `None`.
    pub fn group(&self, alpha: Option<f64>) -> &RegionGroup {
        match alpha {
            Some(a) if self.family.is_reliability() => self
                .groups
                .iter()
                .find(|g| g.alpha == Some(a))
                .unwrap_or_else(|| self.default_group()),
            _ => self.default_group(),
        }
    }

    pub fn default_group(&self) -> &RegionGroup {
        self.groups.last().expect("region sets are nonempty")
    }

    pub fn region_of(&self, theta: &[f64], alpha: Option<f64>) -> &MonotonicityRegion {
        self.group(alpha).region_of(theta)
    }

    /// Boundary hyperplanes (axis, coordinate), sorted and deduplicated.
    pub fn hyperplanes(&self) -> Vec<(usize, f64)> {
        let mut planes = Vec::new();
        for g in &self.groups {
            for r in &g.regions {
                for axis in 0..r.lower.len() {
                    for v in [r.lower[axis], r.upper[axis]] {
                        if v.is_finite() {
                            planes.push((axis, v));
                        }
                    }
                }
            }
        }
        planes.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        planes.dedup();
        planes
    }

    /// Sign vector shared by the whole box for every mileage, if one exists.
    pub fn uniform_signs(&self, space: &ParameterSpace) -> Option<Vec<i8>> {
        let mut signs: Option<Vec<i8>> = None;
        for g in &self.groups {
            let hits: Vec<&MonotonicityRegion> =
                g.regions.iter().filter(|r| r.clip(space).is_some()).collect();
            // A box touching a second region only along the shared boundary
            // still lies inside the first one.
            let first = hits.first()?;
            let covers = first
                .lower
                .iter()
                .zip(&first.upper)
                .zip(space.lower.iter().zip(&space.upper))
                .all(|((rl, ru), (sl, su))| rl <= sl && su <= ru);
            if !covers {
                return None;
            }
            match &signs {
                None => signs = Some(first.signs.clone()),
                Some(s) if *s != first.signs => return None,
                Some(_) => {}
            }
        }
        signs
    }
}

fn sample_box<R: Rng>(rng: &mut R, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(l, u)| if l < u { rng.random_range(*l..=*u) } else { *l })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub samples: usize,
    pub violations: usize,
    /// (θ, φ) with P_f(θ) ≤ P_f(φ) but P_f(d(θ)) > P_f(d(φ)).
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Monte-Carlo check that `degradation` preserves the P_f order on the box.
pub fn check_alignment<R: Rng>(
    family: HealthFamily,
    space: &ParameterSpace,
    degradation: &DegradationSpec,
    alpha: Option<f64>,
    sample_count: usize,
    rng: &mut R,
) -> Result<AlignmentReport> {
    let a = alpha.unwrap_or(0.0);
    family.check_args(&space.lower, alpha)?;
    let mut report = AlignmentReport {
        samples: sample_count,
        violations: 0,
        witness: None,
    };
    for _ in 0..sample_count {
        let mut theta = ParameterPoint(sample_box(rng, &space.lower, &space.upper));
        let mut phi = ParameterPoint(sample_box(rng, &space.lower, &space.upper));
        if family.pf(&theta.0, a) > family.pf(&phi.0, a) {
            std::mem::swap(&mut theta, &mut phi);
        }
        let dt = degradation.apply(&theta, space);
        let dp = degradation.apply(&phi, space);
        if family.pf(&dt.0, a) > family.pf(&dp.0, a) + ORDER_TOL {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some((theta.0, phi.0));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub samples: usize,
    pub min_derivative: f64,
    pub violations: usize,
    pub witness: Option<Vec<f64>>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks ∇_d P_f ≥ −1e-10 for d a convex combination of the region's
/// directions, at random points of the region clipped to the box.
pub fn check_convex_hull_monotonicity<R: Rng>(
    family: HealthFamily,
    region: &MonotonicityRegion,
    space: &ParameterSpace,
    weights: &[f64],
    sample_count: usize,
    rng: &mut R,
) -> MonotonicityReport {
    let alpha = region.alpha.unwrap_or(0.0);
    let d = region.direction(weights);
    let mut report = MonotonicityReport {
        samples: 0,
        min_derivative: f64::INFINITY,
        violations: 0,
        witness: None,
    };
    let Some((lo, hi)) = region.clip(space) else {
        return report;
    };
    for _ in 0..sample_count {
        let theta = sample_box(rng, &lo, &hi);
        let g = family.grad(&theta, alpha);
        let dd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        report.samples += 1;
        report.min_derivative = report.min_derivative.min(dd);
        if dd < -DERIVATIVE_TOL {
            report.violations += 1;
            report.witness.get_or_insert(theta);
        }
    }
    report
}

/// Lipschitz constant of P_f with respect to unit-cube coordinates,
/// estimated from the gradient norm on a grid and inflated by a safety factor.
pub fn lipschitz_unit(family: HealthFamily, space: &ParameterSpace, alpha: Option<f64>) -> f64 {
    const GRID: usize = 101;
    const SAFETY: f64 = 1.25;
    let a = alpha.unwrap_or(0.0);
    let w = space.widths();
    let mut best = 0.0_f64;
    for i in 0..GRID {
        for j in 0..GRID {
            let u = vec![i as f64 / (GRID - 1) as f64, j as f64 / (GRID - 1) as f64];
            let theta = space.from_unit(&ParameterPoint(u));
            let g = family.grad(&theta.0, a);
            let norm = (g[0] * w[0]).hypot(g[1] * w[1]);
            best = best.max(norm);
        }
    }
    best * SAFETY
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_at_zero_mean_is_one_half() {
        let p = HealthFamily::Normal.failure_probability(&[0.0, 0.5], None).unwrap();
        assert_eq!(p, 0.5);
        let g = HealthFamily::Normal.gradient(&[0.0, 0.5], None).unwrap();
        assert_eq!(g[1], 0.0);
        assert!((g[0] + 1.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weibull_reference_value() {
        let p = HealthFamily::Weibull.failure_probability(&[3.0, 200.0], Some(70.0)).unwrap();
        assert!((p - (1.0 - (-0.042875f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn mileage_is_required_exactly_for_reliability() {
        assert!(HealthFamily::Gamma.failure_probability(&[1.0, 2.0], None).is_err());
        assert!(HealthFamily::Normal.failure_probability(&[0.1, 0.2], Some(1.0)).is_err());
        assert!(HealthFamily::Weibull.failure_probability(&[0.0, 2.0], Some(1.0)).is_err());
    }

    #[test]
    fn region_tie_breaks_to_lower_rank() {
        let normal = RegionSet::new(HealthFamily::Normal, &[]).unwrap();
        assert_eq!(normal.region_of(&[0.3, 0.4], None).signs, vec![-1, 1]);
        assert_eq!(normal.region_of(&[0.0, 0.4], None).rank, 0);
        assert_eq!(normal.region_of(&[-0.1, 0.4], None).rank, 1);
        let weibull = RegionSet::new(HealthFamily::Weibull, &[0.7]).unwrap();
        assert_eq!(weibull.region_of(&[0.5, 0.7], Some(0.7)).rank, 0);
        assert_eq!(weibull.hyperplanes(), vec![(1, 0.7)]);
        assert!(RegionSet::new(HealthFamily::Gamma, &[]).is_err());
    }

    #[test]
    fn uniform_signs_detects_single_region_boxes() {
        let weibull = RegionSet::new(HealthFamily::Weibull, &[0.5, 1.0]).unwrap();
        let inside = ParameterSpace::new(vec![0.5, 1.0], vec![4.0, 3.0]).unwrap();
        let split = ParameterSpace::new(vec![0.5, 0.6], vec![4.0, 3.0]).unwrap();
        assert_eq!(weibull.uniform_signs(&inside), Some(vec![-1, -1]));
        assert_eq!(weibull.uniform_signs(&split), None);
    }
}
