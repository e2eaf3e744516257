//! Pullback approximation of invariant random compact sets and the
//! cardinality, separation, covering and continuity diagnostics on them.

mod cloud;

pub use cloud::{cluster_centroids, clusters, covering_number, dist, hausdorff_distance, min_pairwise, Cloud};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::base::{BaseOrbit, BaseSpec};
use crate::driving::{cell_center, cell_of, pull_back_xi, DrivingSystem};
use crate::error::{Error, Result};
use crate::io::CsvBuilder;
use crate::linalg::MAX_DIM;
use crate::models::AffineFamily;
use crate::par::*;
use crate::skew::{cocycle, iterate, SkewSystem};

/// Axis-aligned box `[lo_i, hi_i]` from which pullback samples start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SeedBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        SeedBox { lo, hi }
    }

    /// `[lo, hi]^d`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Self {
        SeedBox { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(Error::Domain(format!("seed box must have dimension {dim}")));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Domain("empty seed box".into()));
        }
        Ok(())
    }

    /// Midpoint lattice with `per_axis` points along each axis.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|a| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        self.lo[a] + (i as f64 + 0.5) * (self.hi[a] - self.lo[a]) / per_axis as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Finite-cloud approximation of a random compact set along one base orbit.
#[derive(Debug, Clone)]
pub struct RandomSetApprox {
    pub orbit: BaseOrbit,
    /// Sorted absolute times at which fibres are stored.
    pub times: Vec<i64>,
    pub grid: usize,
    pub depth: usize,
    pub dim: usize,
    /// `clouds[i * grid + c]` is the fibre at `(times[i], cell c)`.
    pub clouds: Vec<Cloud>,
}

impl RandomSetApprox {
    pub fn time_index(&self, t: i64) -> Option<usize> {
        self.times.binary_search(&t).ok()
    }

    pub fn fibre(&self, t: i64, cell: usize) -> Option<&Cloud> {
        self.time_index(t).map(|i| &self.clouds[i * self.grid + cell])
    }

    /// All `(ξ_cell, y)` pairs at time `t`.
    pub fn fibre_points(&self, t: i64) -> Option<Vec<(f64, &[f64])>> {
        let i = self.time_index(t)?;
        let mut out = Vec::new();
        for c in 0..self.grid {
            let xi = cell_center(c, self.grid);
            for p in self.clouds[i * self.grid + c].points() {
                out.push((xi, p));
            }
        }
        Some(out)
    }

    pub fn max_diameter(&self) -> f64 {
        self.clouds.iter().map(Cloud::diameter).fold(0.0, f64::max)
    }

    /// `t,cell_index,point_index,y0,...`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string(), "cell_index".into(), "point_index".into()];
        header.extend((0..self.dim).map(|i| format!("y{i}")));
        let mut b = CsvBuilder::with_header(&header);
        for (i, t) in self.times.iter().enumerate() {
            for c in 0..self.grid {
                for (j, p) in self.clouds[i * self.grid + c].points().enumerate() {
                    b.row(&[*t, c as i64, j as i64], p);
                }
            }
        }
        b.finish()
    }

    pub fn manifest(&self, system: &SkewSystem, residual: Option<f64>) -> serde_json::Value {
        serde_json::json!({
            "model": system.name,
            "grid": self.grid,
            "depth": self.depth,
            "seed": self.orbit.seed(),
            "window_radius": self.orbit.radius(),
            "times": [self.times.first(), self.times.last()],
            "time_count": self.times.len(),
            "norm": system.norm.as_str(),
            "residual": residual,
        })
    }

    /// Per-fibre centroids as a graph estimate, with its invariance residual.
    pub fn graph_estimate(&self, system: &SkewSystem) -> Result<GraphEstimate> {
        let values: Vec<Vec<f64>> = self.clouds.iter().map(Cloud::centroid).collect();
        let mut g = GraphEstimate { times: self.times.clone(), grid: self.grid, dim: self.dim, values, residual: 0.0 };
        g.residual = g.residual_along(system, &self.orbit)?;
        Ok(g)
    }
}

/// Pullback targets: `depth` skew steps started at time `t − depth` from the
/// seed lattice, at the driving preimage of each cell centre.
#[derive(Debug, Clone)]
pub struct PullbackSpec {
    pub depth: usize,
    pub seed_box: SeedBox,
    pub samples_per_axis: usize,
    pub grid: usize,
}

/// Finite-value bound beyond which a trajectory counts as escaped.
pub const ESCAPE_BOUND: f64 = 1e100;

/// Pullback approximation at each of `times`.
pub fn pullback(system: &SkewSystem, orbit: &BaseOrbit, spec: &PullbackSpec, times: &[i64]) -> Result<RandomSetApprox> {
    let d = system.dim();
    spec.seed_box.validate(d)?;
    if spec.grid == 0 || spec.samples_per_axis == 0 {
        return Err(Error::Domain("grid and samples per axis must be positive".into()));
    }
    let mut times = times.to_vec();
    times.sort_unstable();
    times.dedup();
    for &t in &times {
        orbit.require_span(t - spec.depth as i64, t)?;
    }
    let seeds = spec.seed_box.lattice(spec.samples_per_axis);
    let g = spec.grid;
    let jobs = times.len() * g;
    let clouds: Vec<Result<Cloud>> = (0..jobs)
        .into_par_iter()
        .map(|job| {
            let t = times[job / g];
            let cell = job % g;
            pullback_fibre(system, orbit, spec, &seeds, t, cell)
        })
        .collect();
    let clouds = clouds.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RandomSetApprox { orbit: orbit.clone(), times, grid: g, depth: spec.depth, dim: d, clouds })
}

/// Pullback over the contiguous range `t0..=t1`.
pub fn pullback_range(system: &SkewSystem, orbit: &BaseOrbit, spec: &PullbackSpec, t0: i64, t1: i64) -> Result<RandomSetApprox> {
    let times: Vec<i64> = (t0..=t1).collect();
    pullback(system, orbit, spec, &times)
}

fn pullback_fibre(system: &SkewSystem, orbit: &BaseOrbit, spec: &PullbackSpec, seeds: &[Vec<f64>], t: i64, cell: usize) -> Result<Cloud> {
    let d = system.dim();
    let at_t = orbit.shift(t - orbit.origin())?;
    let xi_t = cell_center(cell, spec.grid);
    let xi_start = pull_back_xi(&at_t, &system.driving, xi_t, spec.depth)?;
    let start = at_t.shift(-(spec.depth as i64))?;
    let mut coords = Vec::with_capacity(seeds.len() * d);
    for y0 in seeds {
        let s = iterate(system, &start, xi_start, y0, spec.depth)?;
        if s.y.iter().all(|v| v.is_finite() && v.abs() < ESCAPE_BOUND) {
            coords.extend_from_slice(&s.y);
        }
    }
    if coords.is_empty() {
        return Err(Error::DegenerateFibre { t, cell, detail: "every sample escaped; seed box misses the attractor".into() });
    }
    Ok(Cloud::new(d, coords))
}

/// Estimated graph `φ̂(t, cell)` with its invariance residual.
#[derive(Debug, Clone, Serialize)]
pub struct GraphEstimate {
    pub times: Vec<i64>,
    pub grid: usize,
    pub dim: usize,
    pub values: Vec<Vec<f64>>,
    pub residual: f64,
}

impl GraphEstimate {
    pub fn value(&self, t: i64, cell: usize) -> Option<&[f64]> {
        let i = self.times.binary_search(&t).ok()?;
        Some(&self.values[i * self.grid + cell])
    }

    /// `max |h(payload_t, ξ_cell, φ̂(t,cell)) − φ̂(t+1, image cell)|` over consecutive stored times.
    pub fn residual_along(&self, system: &SkewSystem, orbit: &BaseOrbit) -> Result<f64> {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        let mut out = [0.0; MAX_DIM];
        for &t in &self.times {
            if self.times.binary_search(&(t + 1)).is_err() {
                continue;
            }
            let p = orbit.at(t)?;
            for c in 0..self.grid {
                let xi = cell_center(c, self.grid);
                system.fibre.map(p, xi, self.value(t, c).unwrap(), &mut out[..d]);
                let target = cell_of(system.driving.forward(p, xi), self.grid);
                worst = worst.max(dist(&out[..d], self.value(t + 1, target).unwrap()));
            }
        }
        Ok(worst)
    }

    /// `t,cell_index,phi0,...`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string(), "cell_index".into()];
        header.extend((0..self.dim).map(|i| format!("phi{i}")));
        let mut b = CsvBuilder::with_header(&header);
        for (i, t) in self.times.iter().enumerate() {
            for c in 0..self.grid {
                b.row(&[*t, c as i64], &self.values[i * self.grid + c]);
            }
        }
        b.finish()
    }
}

/// Truncated backward series for the invariant graph of an affine family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    /// `(sup|a|)^m · sup|b| / (1 − sup|a|)`.
    pub tail_bound: f64,
}

/// `φ(ω,ξ) = Σ_{k=1}^{m} (∏_{j=1}^{k−1} a(θ^{−j}ω)) · b(ξ_{−k})`, where `ξ_{−k}`
/// is the driving preimage of `ξ` at time origin−k.
pub fn affine_graph_oracle(
    orbit: &BaseOrbit,
    driving: &DrivingSystem,
    family: &AffineFamily,
    base: &BaseSpec,
    xi: f64,
    m: usize,
) -> Result<OracleValue> {
    let sa = family.sup_abs_a(base);
    if !(sa < 1.0) {
        return Err(Error::OracleInapplicable(format!("sup|a| = {sa} is not below 1")));
    }
    orbit.require_span(orbit.origin() - m as i64, orbit.origin())?;
    let mut value = 0.0;
    let mut weight = 1.0;
    let mut x = xi;
    for k in 1..=m as i64 {
        let p = orbit.payload(-k)?;
        x = driving.inverse(p, x);
        value += weight * family.b(x);
        weight *= family.a(p);
    }
    let tail_bound = sa.powi(m as i32) * family.sup_abs_b() / (1.0 - sa);
    Ok(OracleValue { value, tail_bound })
}

/// Per-fibre cluster counts and the common count when all agree.
#[derive(Debug, Clone, Serialize)]
pub struct CardinalityReport {
    pub cluster_radius: f64,
    /// `(t, cell, count)`.
    pub counts: Vec<(i64, usize, usize)>,
    /// `None` when fibres disagree ("non-constant").
    pub global: Option<usize>,
}

impl CardinalityReport {
    pub fn global_label(&self) -> String {
        self.global.map_or_else(|| "non-constant".to_string(), |n| n.to_string())
    }

    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &(_, _, n) in &self.counts {
            *h.entry(n).or_insert(0) += 1;
        }
        h
    }
}

pub fn fibre_cardinality(k: &RandomSetApprox, cluster_radius: f64) -> Result<CardinalityReport> {
    if !(cluster_radius > 0.0) {
        return Err(Error::Domain("cluster radius must be positive".into()));
    }
    let mut counts = Vec::with_capacity(k.clouds.len());
    for (i, t) in k.times.iter().enumerate() {
        for c in 0..k.grid {
            counts.push((*t, c, clusters(&k.clouds[i * k.grid + c], cluster_radius).len()));
        }
    }
    let first = counts.first().map(|x| x.2);
    let global = if counts.iter().all(|x| Some(x.2) == first) { first } else { None };
    Ok(CardinalityReport { cluster_radius, counts, global })
}

/// Minimum distance between cluster centroids of one fibre; `+∞` for singletons.
pub fn min_separation(k: &RandomSetApprox, t: i64, cell: usize, cluster_radius: f64) -> Result<f64> {
    let cloud = k.fibre(t, cell).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
    Ok(min_pairwise(&cluster_centroids(cloud, cluster_radius)))
}

/// Smallest centroid separation over every stored fibre.
pub fn min_separation_all(k: &RandomSetApprox, cluster_radius: f64) -> f64 {
    k.clouds.iter().map(|c| min_pairwise(&cluster_centroids(c, cluster_radius))).fold(f64::INFINITY, f64::min)
}

/// Half of the smallest separation found after merging numerically identical
/// points, floored at `1e-6`.
pub fn default_cluster_radius(sets: &[RandomSetApprox]) -> f64 {
    let coarse = 1e-9;
    let sep = sets.iter().map(|k| min_separation_all(k, coarse)).fold(f64::INFINITY, f64::min);
    if sep.is_finite() {
        (sep / 2.0).max(1e-6)
    } else {
        1e-6
    }
}

/// Max Hausdorff distance between neighbouring cells (cyclically) at time `t`.
pub fn continuity_modulus_at(k: &RandomSetApprox, t: i64) -> Result<f64> {
    let i = k.time_index(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
    let g = k.grid;
    let mut worst: f64 = 0.0;
    for c in 0..g {
        let a = &k.clouds[i * g + c];
        let b = &k.clouds[i * g + (c + 1) % g];
        worst = worst.max(hausdorff_distance(a, b)?);
    }
    Ok(worst)
}

/// Moduli for a sequence of refinements computed with identical seeds.
pub fn continuity_modulus(refinements: &[RandomSetApprox], t: i64) -> Result<Vec<f64>> {
    refinements.iter().map(|k| continuity_modulus_at(k, t)).collect()
}

/// `max over t, cell` of `d_H(h(K(t,cell)), K(t+1, driven cell))`.
pub fn invariance_residual(k: &RandomSetApprox, system: &SkewSystem) -> Result<f64> {
    let d = k.dim;
    let g = k.grid;
    let pairs: Vec<(usize, usize)> = k
        .times
        .iter()
        .enumerate()
        .filter_map(|(i, t)| k.time_index(t + 1).map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Domain("invariance residual needs two consecutive times".into()));
    }
    let jobs: Vec<(usize, usize, usize)> = pairs.iter().flat_map(|&(i, j)| (0..g).map(move |c| (i, j, c))).collect();
    let vals: Vec<Result<f64>> = (0..jobs.len())
        .into_par_iter()
        .map(|n| {
            let (i, j, c) = jobs[n];
            let p = k.orbit.at(k.times[i])?;
            let xi = cell_center(c, g);
            let image = k.clouds[i * g + c].map(|y, out| system.fibre.map(p, xi, y, &mut out[..d]));
            let target = cell_of(system.driving.forward(p, xi), g);
            hausdorff_distance(&image, &k.clouds[j * g + target])
        })
        .collect();
    let mut worst: f64 = 0.0;
    for v in vals {
        worst = worst.max(v?);
    }
    Ok(worst)
}

/// Radii `ε_p = e^{−pη}·r`, `p = 0..=p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsLadder {
    pub r: f64,
    pub eta: f64,
    pub p_max: usize,
}

impl EpsLadder {
    pub fn radii(&self) -> Vec<f64> {
        (0..=self.p_max).map(|p| (-(p as f64) * self.eta).exp() * self.r).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoveringReport {
    /// Largest `N_ε(image) − N_ε(source)` or `N_ε − N_{e^{−η}ε}` on the image.
    pub max_violation: i64,
    /// Allowed slack in balls: 0 where covers are exact (d = 1), else 1.
    pub slack: i64,
    pub tested: usize,
    /// `(t, cell, p, N_source, N_image)`.
    pub records: Vec<(i64, usize, usize, usize, usize)>,
}

impl CoveringReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.slack
    }
}

/// Checks `N_ε(image) ≤ N_{e^{−η}ε}(image) ≤ N_ε(source)` where the source
/// fibre at `t` is covered at radius `ε·e^{Ĉ(t)}`, its `k`-step image at
/// `ε·e^{Ĉ(t+k)}`.
///
/// `c_hat` must hold values at `t` and `t + k` for every tested `t`.
pub fn covering_monotonicity_check(
    k_set: &RandomSetApprox,
    system: &SkewSystem,
    ladder: &EpsLadder,
    k: usize,
    c_hat: &BTreeMap<i64, f64>,
    times: &[i64],
) -> Result<CoveringReport> {
    let g = k_set.grid;
    let d = k_set.dim;
    let radii = ladder.radii();
    let drop = (-ladder.eta).exp();
    let mut max_violation = i64::MIN;
    let mut records = Vec::new();
    for &t in times {
        let (Some(ct), Some(ctk)) = (c_hat.get(&t), c_hat.get(&(t + k as i64))) else {
            return Err(Error::Domain(format!("missing Ĉ value at t={t} or t+{k}")));
        };
        let start = k_set.orbit.shift(t - k_set.orbit.origin())?;
        for c in 0..g {
            let Some(src) = k_set.fibre(t, c) else {
                return Err(Error::Domain(format!("no fibre stored at t={t}")));
            };
            let xi = cell_center(c, g);
            let mut coords = Vec::with_capacity(src.len() * d);
            for y in src.points() {
                coords.extend(iterate(system, &start, xi, y, k)?.y);
            }
            let img = Cloud::new(d, coords);
            for (pi, eps) in radii.iter().enumerate() {
                let n_src = covering_number(src, eps * ct.exp());
                let n_img = covering_number(&img, eps * ctk.exp());
                let n_img_fine = covering_number(&img, drop * eps * ctk.exp());
                let v = (n_img as i64 - n_img_fine as i64).max(n_img_fine as i64 - n_src as i64);
                max_violation = max_violation.max(v);
                records.push((t, c, pi, n_src, n_img));
            }
        }
    }
    Ok(CoveringReport {
        max_violation: if records.is_empty() { 0 } else { max_violation },
        slack: if d == 1 { 0 } else { 1 },
        tested: records.len(),
        records,
    })
}

/// Which coordinates are perturbed when sampling `B_r(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighbourhoodMode {
    /// Perturb `ξ` and `y`.
    Product,
    /// Perturb `y` only.
    FibreOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtraUniformity {
    pub on_set_sup: f64,
    /// `(r, sup over the r-neighbourhood, passes)`.
    pub per_radius: Vec<(f64, f64, bool)>,
    /// Largest tested radius for which every smaller tested radius also passes.
    pub largest_passing: Option<f64>,
}

/// Compares `sup Φ_k` over sampled `r`-neighbourhoods of the clouds with the
/// on-set sup plus `eps`, across the ensemble.
pub fn extra_uniformity_check(
    system: &SkewSystem,
    sets: &[RandomSetApprox],
    k: usize,
    eps: f64,
    radii: &[f64],
    mode: NeighbourhoodMode,
) -> Result<ExtraUniformity> {
    let d = system.dim();
    let offsets = [-1.0, -0.5, 0.5, 1.0];
    let phi = |set: &RandomSetApprox, t: i64, xi: f64, y: &[f64]| -> Result<f64> {
        let start = set.orbit.shift(t - set.orbit.origin())?;
        Ok(cocycle(system, &start, xi, y, k)?.phi_n)
    };
    let mut on_set = f64::NEG_INFINITY;
    for set in sets {
        for &t in &set.times {
            for (xi, y) in set.fibre_points(t).unwrap() {
                on_set = on_set.max(phi(set, t, xi, y)?);
            }
        }
    }
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let mut per_radius = Vec::new();
    for &r in &radii {
        let mut sup = f64::NEG_INFINITY;
        for set in sets {
            for &t in &set.times {
                for (xi, y) in set.fibre_points(t).unwrap() {
                    let mut yy = [0.0; MAX_DIM];
                    for axis in 0..d {
                        for o in offsets {
                            yy[..d].copy_from_slice(y);
                            yy[axis] += o * r;
                            sup = sup.max(phi(set, t, xi, &yy[..d])?);
                            if mode == NeighbourhoodMode::Product {
                                sup = sup.max(phi(set, t, crate::driving::wrap(xi + o * r), y)?);
                            }
                        }
                    }
                }
            }
        }
        per_radius.push((r, sup, sup <= on_set + eps));
    }
    let largest_passing = per_radius.iter().take_while(|x| x.2).last().map(|x| x.0);
    Ok(ExtraUniformity { on_set_sup: on_set, per_radius, largest_passing })
}
