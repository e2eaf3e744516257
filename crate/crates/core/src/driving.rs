//! Random circle homeomorphisms `θ⋉g` on `Ω×Ξ`, `Ξ = [0,1)`, and grid-based
//! diagnostics for omega limits, minimality and transitivity.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::BaseOrbit;
use crate::error::{Error, Result};
use crate::io::CsvBuilder;
use crate::par::*;

/// Reduces to `[0,1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the unit-length circle.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

pub type CircleFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Serializable description of the builtin drivings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrivingKind {
    /// `ξ ↦ ξ + α(ω) + τ`, with `α(ω)` read from payload component `component`.
    RandomRotation { tau: f64, component: usize },
    Identity,
    /// `ξ ↦ ξ + ρ`, ignoring the payload.
    QuasiperiodicShift { rho: f64 },
}

/// The fibre action `g_ω` of the random homeomorphism together with its inverse.
#[derive(Clone)]
pub enum DrivingSystem {
    Builtin(DrivingKind),
    Custom { forward: CircleFn, inverse: CircleFn },
}

impl fmt::Debug for DrivingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrivingSystem::Builtin(k) => write!(f, "{k:?}"),
            DrivingSystem::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl From<DrivingKind> for DrivingSystem {
    fn from(k: DrivingKind) -> Self {
        DrivingSystem::Builtin(k)
    }
}

impl DrivingSystem {
    pub fn identity() -> Self {
        DrivingKind::Identity.into()
    }

    pub fn quasiperiodic(rho: f64) -> Self {
        DrivingKind::QuasiperiodicShift { rho }.into()
    }

    pub fn random_rotation(tau: f64) -> Self {
        DrivingKind::RandomRotation { tau, component: 0 }.into()
    }

    pub fn custom(forward: CircleFn, inverse: CircleFn) -> Self {
        DrivingSystem::Custom { forward, inverse }
    }

    pub fn label(&self) -> String {
        match self {
            DrivingSystem::Builtin(DrivingKind::RandomRotation { tau, .. }) => format!("random_rotation(tau={tau})"),
            DrivingSystem::Builtin(DrivingKind::Identity) => "identity".into(),
            DrivingSystem::Builtin(DrivingKind::QuasiperiodicShift { rho }) => {
                format!("quasiperiodic_shift(rho={rho})")
            }
            DrivingSystem::Custom { .. } => "custom".into(),
        }
    }

    /// Rotation amount when `g(payload, ·)` is a rigid rotation.
    #[inline]
    pub fn translation(&self, payload: &[f64]) -> Option<f64> {
        match self {
            DrivingSystem::Builtin(DrivingKind::RandomRotation { tau, component }) => Some(payload[*component] + tau),
            DrivingSystem::Builtin(DrivingKind::Identity) => Some(0.0),
            DrivingSystem::Builtin(DrivingKind::QuasiperiodicShift { rho }) => Some(*rho),
            DrivingSystem::Custom { .. } => None,
        }
    }

    #[inline]
    pub fn forward(&self, payload: &[f64], xi: f64) -> f64 {
        match self {
            DrivingSystem::Custom { forward, .. } => wrap(forward(payload, xi)),
            _ => wrap(xi + self.translation(payload).unwrap_or(0.0)),
        }
    }

    #[inline]
    pub fn inverse(&self, payload: &[f64], xi: f64) -> f64 {
        match self {
            DrivingSystem::Custom { inverse, .. } => wrap(inverse(payload, xi)),
            _ => wrap(xi - self.translation(payload).unwrap_or(0.0)),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DrivingSystem::Builtin(DrivingKind::Identity))
    }
}

/// A random point `ω ↦ ξ(ω)`, evaluated on the payload at the orbit origin.
#[derive(Clone)]
pub enum RandomPoint {
    Constant(f64),
    PayloadComponent(usize),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for RandomPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RandomPoint::Constant(c) => write!(f, "Constant({c})"),
            RandomPoint::PayloadComponent(i) => write!(f, "PayloadComponent({i})"),
            RandomPoint::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl RandomPoint {
    pub fn eval(&self, payload: &[f64]) -> f64 {
        wrap(match self {
            RandomPoint::Constant(c) => *c,
            RandomPoint::PayloadComponent(i) => payload[*i],
            RandomPoint::Custom(f) => f(payload),
        })
    }
}

/// Occupancy of the uniform `G`-cell partition of the circle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSet {
    occupancy: Vec<bool>,
}

impl GridSet {
    pub fn empty(resolution: usize) -> Self {
        assert!(resolution > 0, "grid resolution must be positive");
        GridSet { occupancy: vec![false; resolution] }
    }

    pub fn from_cells(resolution: usize, cells: &[usize]) -> Self {
        let mut g = GridSet::empty(resolution);
        for &c in cells {
            g.occupancy[c] = true;
        }
        g
    }

    pub fn resolution(&self) -> usize {
        self.occupancy.len()
    }

    #[inline]
    pub fn cell_of(&self, xi: f64) -> usize {
        cell_of(xi, self.resolution())
    }

    pub fn mark(&mut self, xi: f64) {
        let c = self.cell_of(xi);
        self.occupancy[c] = true;
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.occupancy[cell]
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupancy.iter().enumerate().filter(|(_, o)| **o).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }

    pub fn is_full(&self) -> bool {
        self.occupancy.iter().all(|o| *o)
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.iter().any(|o| *o)
    }

    pub fn is_subset_of(&self, other: &GridSet) -> bool {
        self.resolution() == other.resolution()
            && self.occupancy.iter().zip(&other.occupancy).all(|(a, b)| !*a || *b)
    }

    pub fn union_with(&mut self, other: &GridSet) {
        for (a, b) in self.occupancy.iter_mut().zip(&other.occupancy) {
            *a |= *b;
        }
    }

    /// Cells within `slack` of an occupied cell (circularly) become occupied.
    pub fn dilate(&self, slack: usize) -> GridSet {
        let g = self.resolution();
        let mut out = self.clone();
        for c in self.occupied() {
            for s in 1..=slack {
                out.occupancy[(c + s) % g] = true;
                out.occupancy[(c + g - s % g) % g] = true;
            }
        }
        out
    }

    /// Longest circular run of empty cells, in circle length.
    pub fn max_gap(&self) -> f64 {
        let g = self.resolution();
        if self.is_empty() {
            return 1.0;
        }
        let start = self.occupancy.iter().position(|o| *o).unwrap();
        let (mut best, mut run) = (0usize, 0usize);
        for i in 1..=g {
            if self.occupancy[(start + i) % g] {
                best = best.max(run);
                run = 0;
            } else {
                run += 1;
            }
        }
        best as f64 / g as f64
    }

    pub fn to_csv(&self) -> String {
        let mut b = CsvBuilder::with_header(&["cell_index", "occupied"]);
        for (i, o) in self.occupancy.iter().enumerate() {
            b.row(&[i as i64, *o as i64], &[]);
        }
        b.finish()
    }
}

#[inline]
pub fn cell_of(xi: f64, resolution: usize) -> usize {
    ((wrap(xi) * resolution as f64) as usize).min(resolution - 1)
}

#[inline]
pub fn cell_center(cell: usize, resolution: usize) -> f64 {
    (cell as f64 + 0.5) / resolution as f64
}

/// `g_{θ^{n-1}ω} ∘ … ∘ g_ω (ξ0)`.
pub fn drive_forward(orbit: &BaseOrbit, driving: &DrivingSystem, xi0: f64, n: usize) -> Result<f64> {
    orbit.require_span(orbit.origin(), orbit.origin() + n as i64)?;
    let mut xi = wrap(xi0);
    for i in 0..n as i64 {
        xi = driving.forward(orbit.payload(i)?, xi);
    }
    Ok(xi)
}

/// `g^n_{θ^{-n}ω}(ξ)` applied to a value known at time origin−n.
pub fn drive_from_past(orbit: &BaseOrbit, driving: &DrivingSystem, xi: f64, n: usize) -> Result<f64> {
    let mut xi = xi;
    for i in (1..=n as i64).rev() {
        xi = driving.forward(orbit.payload(-i)?, xi);
    }
    Ok(xi)
}

/// `(g^n_{θ^{-n}ω})^{-1}(ξ)`: preimage at time origin−n of `ξ` at the origin.
pub fn pull_back_xi(orbit: &BaseOrbit, driving: &DrivingSystem, xi: f64, n: usize) -> Result<f64> {
    let mut xi = xi;
    for i in 1..=n as i64 {
        xi = driving.inverse(orbit.payload(-i)?, xi);
    }
    Ok(xi)
}

/// The forward (pullback-evaluated) orbit `ξ_n(ω) = g^n_{θ^{-n}ω}(ξ(θ^{-n}ω))`
/// at the orbit origin, for `n = 0..=horizon`.
///
/// Rigid rotations are accumulated in O(horizon); custom drivings cost
/// O(horizon²).
pub fn forward_orbit_of_point(
    orbit: &BaseOrbit,
    driving: &DrivingSystem,
    point: &RandomPoint,
    horizon: usize,
) -> Result<Vec<f64>> {
    orbit.require_span(orbit.origin() - horizon as i64, orbit.origin())?;
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(point.eval(orbit.payload(0)?));
    if let DrivingSystem::Builtin(_) = driving {
        let mut cumulative = 0.0;
        for n in 1..=horizon as i64 {
            let p = orbit.payload(-n)?;
            cumulative = wrap(cumulative + driving.translation(p).expect("builtin drivings are rotations"));
            out.push(wrap(point.eval(p) + cumulative));
        }
    } else {
        for n in 1..=horizon {
            let start = point.eval(orbit.payload(-(n as i64))?);
            out.push(drive_from_past(orbit, driving, start, n)?);
        }
    }
    Ok(out)
}

/// Cells visited by `ξ_n(origin)` for `burn_in ≤ n ≤ horizon`.
pub fn omega_limit(
    orbit: &BaseOrbit,
    driving: &DrivingSystem,
    point: &RandomPoint,
    resolution: usize,
    burn_in: usize,
    horizon: usize,
) -> Result<GridSet> {
    if horizon <= burn_in {
        return Err(Error::Domain(format!("horizon {horizon} must exceed burn-in {burn_in}")));
    }
    let xs = forward_orbit_of_point(orbit, driving, point, horizon)?;
    let mut set = GridSet::empty(resolution);
    for x in &xs[burn_in..] {
        set.mark(*x);
    }
    Ok(set)
}

/// Per-orbit omega limits of a subsection `ξ^A`.
#[derive(Debug, Clone)]
pub struct SubsectionLimits {
    pub sets: Vec<GridSet>,
    /// Fraction of tested times at which the selector accepted.
    pub accepted_fraction: f64,
    /// Set when fewer than 1% of tested times were accepted.
    pub low_fraction_warning: bool,
}

/// Omega limit of the subsection selected by `selector`: only `n` with the
/// payload at time `-n` in `A` contribute.
pub fn subsection_omega_limit<S>(
    orbits: &[BaseOrbit],
    driving: &DrivingSystem,
    point: &RandomPoint,
    selector: S,
    resolution: usize,
    burn_in: usize,
    horizon: usize,
) -> Result<SubsectionLimits>
where
    S: Fn(&[f64]) -> bool + Sync,
{
    if horizon <= burn_in {
        return Err(Error::Domain(format!("horizon {horizon} must exceed burn-in {burn_in}")));
    }
    let per_orbit: Vec<Result<(GridSet, usize)>> = (0..orbits.len())
        .into_par_iter()
        .map(|i| {
            let orbit = &orbits[i];
            let xs = forward_orbit_of_point(orbit, driving, point, horizon)?;
            let mut set = GridSet::empty(resolution);
            let mut hits = 0;
            for n in burn_in..=horizon {
                if selector(orbit.payload(-(n as i64))?) {
                    set.mark(xs[n]);
                    hits += 1;
                }
            }
            if hits == 0 {
                return Err(Error::EmptySubsection);
            }
            Ok((set, hits))
        })
        .collect();
    let mut sets = Vec::with_capacity(orbits.len());
    let mut hits = 0;
    for r in per_orbit {
        let (s, h) = r?;
        sets.push(s);
        hits += h;
    }
    let tested = orbits.len() * (horizon - burn_in + 1);
    let accepted_fraction = hits as f64 / tested.max(1) as f64;
    Ok(SubsectionLimits { sets, accepted_fraction, low_fraction_warning: accepted_fraction < 0.01 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityVerdict {
    /// Every tested (orbit, point) omega limit occupied all cells.
    pub fills: bool,
    /// Largest empty run over all tests, in circle length.
    pub max_gap: f64,
    pub trials: usize,
    pub points_tested: usize,
}

/// Random points tried by default: two constants and the first payload component.
pub fn default_test_points() -> Vec<RandomPoint> {
    vec![RandomPoint::Constant(0.0), RandomPoint::Constant(0.5), RandomPoint::PayloadComponent(0)]
}

/// Empirical minimality dichotomy: do omega limits of all tested random points
/// fill the grid on every trial orbit? A diagnostic, never a proof.
pub fn minimality_diagnostic(
    orbits: &[BaseOrbit],
    driving: &DrivingSystem,
    points: &[RandomPoint],
    resolution: usize,
    burn_in: usize,
    horizon: usize,
) -> Result<MinimalityVerdict> {
    if orbits.is_empty() || points.is_empty() {
        return Err(Error::Domain("minimality diagnostic needs at least one trial and one point".into()));
    }
    let jobs: Vec<(usize, usize)> =
        (0..orbits.len()).flat_map(|o| (0..points.len()).map(move |p| (o, p))).collect();
    let sets: Vec<Result<GridSet>> = (0..jobs.len())
        .into_par_iter()
        .map(|j| {
            let (o, p) = jobs[j];
            omega_limit(&orbits[o], driving, &points[p], resolution, burn_in, horizon)
        })
        .collect();
    let mut fills = true;
    let mut max_gap: f64 = 0.0;
    for s in sets {
        let s = s?;
        fills &= s.is_full();
        max_gap = max_gap.max(s.max_gap());
    }
    Ok(MinimalityVerdict { fills, max_gap, trials: orbits.len(), points_tested: points.len() })
}

/// Weyl-sum equidistribution statistics `(m, |(1/n) Σ_j e^{2πi m ξ_j}|)`.
pub fn weyl_sums(points: &[f64], max_m: usize) -> Vec<(usize, f64)> {
    let n = points.len().max(1) as f64;
    (1..=max_m)
        .map(|m| {
            let (mut re, mut im) = (0.0, 0.0);
            for x in points {
                let a = TAU * m as f64 * x;
                re += a.cos();
                im += a.sin();
            }
            (m, (re * re + im * im).sqrt() / n)
        })
        .collect()
}

pub fn weyl_csv(sums: &[(usize, f64)]) -> String {
    let mut b = CsvBuilder::with_header(&["m", "modulus"]);
    for (m, v) in sums {
        b.row(&[*m as i64], &[*v]);
    }
    b.finish()
}

/// Smallest `n ≤ horizon` such that the `n`-step forward image of `U`'s cells
/// meets an occupied cell of `V` (cells treated as open arcs).
pub fn transitivity_t1_probe(
    orbit: &BaseOrbit,
    driving: &DrivingSystem,
    u: &GridSet,
    v: &GridSet,
    horizon: usize,
) -> Result<Option<usize>> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Domain("transitivity probe needs non-empty U and V".into()));
    }
    let g_u = u.resolution();
    let g_v = v.resolution();
    if g_u == 1 {
        return Ok(Some(0));
    }
    // (left end, right end) of each arc, images tracked pointwise
    let mut arcs: Vec<(f64, f64)> = u.occupied().map(|c| (c as f64 / g_u as f64, (c + 1) as f64 / g_u as f64)).collect();
    for n in 0..=horizon {
        for &(a, b) in &arcs {
            let len = (b - a).rem_euclid(1.0);
            let len = if len == 0.0 { 1.0 } else { len };
            if v.occupied().any(|c| arc_overlap(a, len, c as f64 / g_v as f64, 1.0 / g_v as f64) > 1e-12) {
                return Ok(Some(n));
            }
        }
        if n == horizon {
            break;
        }
        let p = orbit.payload(n as i64)?;
        for arc in arcs.iter_mut() {
            *arc = (driving.forward(p, arc.0), driving.forward(p, arc.1));
        }
    }
    Ok(None)
}

/// Length of the intersection of arcs `[a, a+la]` and `[b, b+lb]` on the circle.
fn arc_overlap(a: f64, la: f64, b: f64, lb: f64) -> f64 {
    let a = wrap(a);
    let b = wrap(b);
    let mut best: f64 = 0.0;
    for k in [-1.0, 0.0, 1.0] {
        let lo = a.max(b + k);
        let hi = (a + la).min(b + lb + k);
        best = best.max(hi - lo);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeomorphismCheck {
    pub max_inverse_error: f64,
    pub strictly_monotone: bool,
}

/// Grid check that each `g(payload, ·)` is an orientation-preserving circle
/// homeomorphism with the stated inverse.
pub fn check_homeomorphism(driving: &DrivingSystem, payloads: &[Vec<f64>], grid: usize) -> HomeomorphismCheck {
    let mut max_inverse_error: f64 = 0.0;
    let mut strictly_monotone = true;
    for p in payloads {
        let images: Vec<f64> = (0..grid).map(|i| driving.forward(p, i as f64 / grid as f64)).collect();
        let mut total = 0.0;
        for i in 0..grid {
            let step = (images[(i + 1) % grid] - images[i]).rem_euclid(1.0);
            if step <= 0.0 || step >= 0.5 {
                strictly_monotone = false;
            }
            total += step;
            let x = i as f64 / grid as f64;
            max_inverse_error = max_inverse_error.max(circle_dist(driving.inverse(p, images[i]), x));
        }
        // degree one: lift increments sum to exactly one turn
        if (total - 1.0).abs() > 1e-9 {
            strictly_monotone = false;
        }
    }
    HomeomorphismCheck { max_inverse_error, strictly_monotone }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{sample_orbit, BaseSpec, NoiseLaw, GOLDEN_MEAN_FRACTION};

    fn constant_base(v: f64) -> BaseSpec {
        BaseSpec::BernoulliIid { law: NoiseLaw::Discrete { values: vec![v], weights: vec![1.0] }, dimension: 1 }
    }

    #[test]
    fn drive_forward_examples() {
        let o = sample_orbit(&constant_base(0.1), 20, 1).unwrap();
        assert_eq!(drive_forward(&o, &DrivingSystem::identity(), 0.3, 10).unwrap(), 0.3);
        let x = drive_forward(&o, &DrivingSystem::random_rotation(0.15), 0.0, 4).unwrap();
        assert!(circle_dist(x, 0.0) < 1e-12);
        let x = drive_forward(&o, &DrivingSystem::quasiperiodic(GOLDEN_MEAN_FRACTION), 0.5, 2).unwrap();
        assert!((x - 0.736_067_977_499_789_8).abs() < 1e-12);
        assert!(drive_forward(&o, &DrivingSystem::identity(), 0.3, 21).is_err());
    }

    #[test]
    fn omega_limit_fixed_point() {
        let o = sample_orbit(&BaseSpec::uniform(0.2, 0.6, 1), 100, 1).unwrap();
        let s = omega_limit(&o, &DrivingSystem::identity(), &RandomPoint::Constant(0.3), 10, 5, 100).unwrap();
        assert_eq!(s.occupied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn rotation_paths_agree_with_generic_composition() {
        let o = sample_orbit(&BaseSpec::uniform(0.0, 1.0, 1), 60, 4).unwrap();
        let rot = DrivingSystem::random_rotation(0.37);
        let custom = DrivingSystem::custom(
            Arc::new(|p: &[f64], x: f64| x + p[0] + 0.37),
            Arc::new(|p: &[f64], x: f64| x - p[0] - 0.37),
        );
        let pt = RandomPoint::PayloadComponent(0);
        let fast = forward_orbit_of_point(&o, &rot, &pt, 50).unwrap();
        let slow = forward_orbit_of_point(&o, &custom, &pt, 50).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!(circle_dist(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn subsection_with_true_selector_matches_omega_limit() {
        let o = sample_orbit(&BaseSpec::uniform(0.2, 0.6, 1), 2000, 9).unwrap();
        let d = DrivingSystem::random_rotation(0.0);
        let pt = RandomPoint::Constant(0.0);
        let full = omega_limit(&o, &d, &pt, 50, 10, 2000).unwrap();
        let sub = subsection_omega_limit(std::slice::from_ref(&o), &d, &pt, |_| true, 50, 10, 2000).unwrap();
        assert_eq!(sub.sets[0], full);
        assert_eq!(sub.accepted_fraction, 1.0);
    }

    #[test]
    fn subsection_image_containment_and_empty() {
        let o = sample_orbit(&BaseSpec::uniform(0.2, 0.6, 1), 5000, 2).unwrap();
        let pt = RandomPoint::PayloadComponent(0);
        let sub =
            subsection_omega_limit(std::slice::from_ref(&o), &DrivingSystem::identity(), &pt, |p| p[0] < 0.4, 100, 0, 5000)
                .unwrap();
        assert!(sub.sets[0].occupied().all(|c| (20..40).contains(&c)));
        let none = subsection_omega_limit(std::slice::from_ref(&o), &DrivingSystem::identity(), &pt, |p| p[0] > 2.0, 100, 0, 100);
        assert_eq!(none.unwrap_err(), Error::EmptySubsection);
    }

    #[test]
    fn minimality_trivial_fibre() {
        let o = sample_orbit(&BaseSpec::uniform(0.0, 1.0, 1), 100, 2).unwrap();
        let v = minimality_diagnostic(&[o], &DrivingSystem::identity(), &default_test_points(), 1, 0, 50).unwrap();
        assert!(v.fills);
        assert_eq!(v.max_gap, 0.0);
    }

    #[test]
    fn t1_probe_examples() {
        let o = sample_orbit(&constant_base(0.0), 50, 1).unwrap();
        let u = GridSet::from_cells(4, &[0]);
        let v = GridSet::from_cells(4, &[2]);
        assert_eq!(transitivity_t1_probe(&o, &DrivingSystem::identity(), &u, &u, 10).unwrap(), Some(0));
        assert_eq!(transitivity_t1_probe(&o, &DrivingSystem::identity(), &u, &v, 10).unwrap(), None);
        assert_eq!(transitivity_t1_probe(&o, &DrivingSystem::random_rotation(0.25), &u, &v, 10).unwrap(), Some(2));
    }

    #[test]
    fn max_gap_counts_circular_runs() {
        let g = GridSet::from_cells(10, &[2, 8]);
        assert!((g.max_gap() - 0.5).abs() < 1e-15);
        let g = GridSet::from_cells(10, &[0]);
        assert!((g.max_gap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn builtin_drivings_are_homeomorphisms() {
        let o = sample_orbit(&BaseSpec::uniform(0.0, 1.0, 1), 500, 11).unwrap();
        let payloads: Vec<Vec<f64>> = (-500..500).map(|t| o.at(t).unwrap().to_vec()).collect();
        for d in [DrivingSystem::random_rotation(0.37), DrivingSystem::identity(), DrivingSystem::quasiperiodic(GOLDEN_MEAN_FRACTION)] {
            let c = check_homeomorphism(&d, &payloads, 1000);
            assert!(c.strictly_monotone, "{d:?}");
            assert!(c.max_inverse_error < 1e-12, "{d:?}: {}", c.max_inverse_error);
        }
    }

    #[test]
    fn weyl_sums_of_uniform_grid_vanish() {
        let pts: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        for (_, v) in weyl_sums(&pts, 5) {
            assert!(v < 1e-12);
        }
    }
}
