//! Adjusted bounding variables `C`, `Ĉ_k` along sampled orbits and checks of
//! the uniform estimates `Φ_n ≤ C + nλ'` and `Φ_k ≤ Ĉ_k∘θ^k − Ĉ_k + kλ'`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attractor::{pullback, Cloud, PullbackSpec, RandomSetApprox};
use crate::base::BaseOrbit;
use crate::error::{Error, Result};
use crate::io::CsvBuilder;
use crate::par::*;
use crate::skew::{iterate, mean_stderr, phi_series_from, SkewSystem};

/// Slack allowed on every verified inequality.
pub const TOLERANCE: f64 = 1e-9;

/// `[Φ^K_0, …, Φ^K_n]` at time `t`: pointwise max of `Φ_m` over the stored
/// fibre points. `-∞` entries survive the max only when every point is singular.
pub fn phi_sup_k_series(system: &SkewSystem, set: &RandomSetApprox, t: i64, n: usize) -> Result<Vec<f64>> {
    let pts = set.fibre_points(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
    if pts.is_empty() {
        return Err(Error::Domain("empty fibre".into()));
    }
    let mut sup = vec![f64::NEG_INFINITY; n + 1];
    for (xi, y) in pts {
        let s = phi_series_from(system, &set.orbit, t, xi, y, n)?;
        for (m, v) in sup.iter_mut().zip(s) {
            *m = m.max(v);
        }
    }
    Ok(sup)
}

/// `Φ^K_n` at time `t`.
pub fn phi_sup_k(system: &SkewSystem, set: &RandomSetApprox, t: i64, n: usize) -> Result<f64> {
    Ok(*phi_sup_k_series(system, set, t, n)?.last().unwrap())
}

/// A cloud point maximising `Φ_n` from `(t, ξ)`; ties go to the
/// lexicographically smallest point.
pub fn argmax_on_cloud(system: &SkewSystem, orbit: &BaseOrbit, t: i64, xi: f64, cloud: &Cloud, n: usize) -> Result<Vec<f64>> {
    let mut best: Option<(f64, &[f64])> = None;
    for y in cloud.points() {
        let v = phi_series_from(system, orbit, t, xi, y, n)?[n];
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, y));
        }
    }
    best.map(|b| b.1.to_vec()).ok_or_else(|| Error::Domain("empty cloud".into()))
}

/// A fibre point `(ξ, y)` at time `t` maximising `Φ_n`; ties go to the
/// lexicographically smallest `(ξ, y)`.
pub fn argmax_on_fibre(system: &SkewSystem, set: &RandomSetApprox, t: i64, n: usize) -> Result<(f64, Vec<f64>)> {
    let pts = set.fibre_points(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
    let mut best: Option<(f64, f64, &[f64])> = None;
    for (xi, y) in pts {
        let v = phi_series_from(system, &set.orbit, t, xi, y, n)?[n];
        if best.is_none_or(|(b, _, _)| v > b) {
            best = Some((v, xi, y));
        }
    }
    best.map(|(_, xi, y)| (xi, y.to_vec())).ok_or_else(|| Error::Domain("empty fibre".into()))
}

/// Truncated sup values along an orbit with their attainment flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSeries {
    pub times: Vec<i64>,
    pub values: Vec<f64>,
    /// Index `n` at which the sup was attained (smallest on ties).
    pub argmax: Vec<usize>,
    /// False where the sup sits on the truncation boundary `N_max`.
    pub interior: Vec<bool>,
}

impl BoundSeries {
    pub fn all_interior(&self) -> bool {
        self.interior.iter().all(|b| *b)
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        self.times.binary_search(&t).ok().map(|i| self.values[i])
    }

    pub fn as_map(&self) -> BTreeMap<i64, f64> {
        self.times.iter().copied().zip(self.values.iter().copied()).collect()
    }

    pub fn map_values<F: Fn(i64, f64) -> f64>(&self, f: F) -> BoundSeries {
        let values = self.times.iter().zip(&self.values).map(|(t, v)| f(*t, *v)).collect();
        BoundSeries { values, ..self.clone() }
    }
}

fn sup_with_index<I: Iterator<Item = f64>>(it: I) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (n, v) in it.enumerate() {
        if v > best.0 {
            best = (v, n);
        }
    }
    best
}

/// `C(t) = max_{0≤n≤N_max} (−λ'n + Φ^K_n(t))` for each `(t, [Φ^K_0..Φ^K_{N_max}])`.
pub fn compute_c(series: &[(i64, Vec<f64>)], lambda_prime: f64, n_max: usize) -> Result<BoundSeries> {
    let mut out = BoundSeries { times: vec![], values: vec![], argmax: vec![], interior: vec![] };
    for (t, s) in series {
        if s.len() <= n_max {
            return Err(Error::Domain(format!("Φ^K series at t={t} has {} terms, need {}", s.len(), n_max + 1)));
        }
        let (v, n) = sup_with_index((0..=n_max).map(|n| -lambda_prime * n as f64 + s[n]));
        out.times.push(*t);
        out.values.push(v);
        out.argmax.push(n);
        out.interior.push(n < n_max);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `sup_{n≥0}(−λ'nk + Σ_{j=1}^{n} Φ_k^K(t − jk)) ≥ 0`.
    Nonneg,
    /// `−sup_{n≥0}(−λ'nk + Σ_{j=0}^{n−1} Φ_k^K(t + jk)) ≤ 0`.
    Nonpos,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Nonneg => "nonneg",
            Variant::Nonpos => "nonpos",
        }
    }
}

/// `Ĉ_k` at each of `times` from `Φ_k^K` values keyed by time.
pub fn compute_c_hat_k(
    phi_k: &BTreeMap<i64, f64>,
    k: usize,
    lambda_prime: f64,
    n_max: usize,
    variant: Variant,
    times: &[i64],
) -> Result<BoundSeries> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let k = k as i64;
    let mut out = BoundSeries { times: vec![], values: vec![], argmax: vec![], interior: vec![] };
    for &t in times {
        let mut terms = Vec::with_capacity(n_max + 1);
        let mut acc = 0.0;
        terms.push(0.0);
        for n in 1..=n_max as i64 {
            let s = match variant {
                Variant::Nonneg => t - n * k,
                Variant::Nonpos => t + (n - 1) * k,
            };
            let v = phi_k.get(&s).ok_or_else(|| Error::Domain(format!("Φ_k^K missing at t={s}")))?;
            acc += v;
            terms.push(-lambda_prime * (n * k) as f64 + acc);
        }
        let (v, n) = sup_with_index(terms.into_iter());
        out.times.push(t);
        out.values.push(if variant == Variant::Nonneg { v } else { -v });
        out.argmax.push(n);
        out.interior.push(n < n_max);
    }
    Ok(out)
}

/// One failed inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub orbit: usize,
    pub t: i64,
    pub n: usize,
    pub excess: f64,
}

/// All `(n ≤ N_max, t, point)` with `Φ_n > C(t) + nλ' + 10⁻⁹`.
pub fn verify_main_estimate(
    system: &SkewSystem,
    sets: &[RandomSetApprox],
    c: &[BoundSeries],
    lambda_prime: f64,
    n_max: usize,
) -> Result<Vec<Violation>> {
    if sets.len() != c.len() {
        return Err(Error::Domain("one C series per orbit required".into()));
    }
    let jobs: Vec<(usize, usize)> = c.iter().enumerate().flat_map(|(o, s)| (0..s.times.len()).map(move |i| (o, i))).collect();
    let found: Vec<Result<Vec<Violation>>> = (0..jobs.len())
        .into_par_iter()
        .map(|j| {
            let (o, i) = jobs[j];
            let t = c[o].times[i];
            let ct = c[o].values[i];
            let mut v = Vec::new();
            let pts = sets[o].fibre_points(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
            for (xi, y) in pts {
                let s = phi_series_from(system, &sets[o].orbit, t, xi, y, n_max)?;
                for (n, phi) in s.iter().enumerate() {
                    let excess = phi - (ct + n as f64 * lambda_prime);
                    if excess > TOLERANCE {
                        v.push(Violation { orbit: o, t, n, excess });
                    }
                }
            }
            Ok(v)
        })
        .collect();
    let mut out = Vec::new();
    for f in found {
        out.extend(f?);
    }
    Ok(out)
}

/// All `(t, point)` with `Φ_k > Ĉ_k(t+k) − Ĉ_k(t) + kλ' + 10⁻⁹`, for `t`
/// where both values are known.
pub fn verify_complement(
    system: &SkewSystem,
    sets: &[RandomSetApprox],
    c_hat: &[BoundSeries],
    k: usize,
    lambda_prime: f64,
) -> Result<Vec<Violation>> {
    if sets.len() != c_hat.len() {
        return Err(Error::Domain("one Ĉ_k series per orbit required".into()));
    }
    let mut out = Vec::new();
    for (o, (set, ch)) in sets.iter().zip(c_hat).enumerate() {
        let m = ch.as_map();
        let found: Vec<Result<Vec<Violation>>> = ch
            .times
            .clone()
            .into_par_iter()
            .map(|t| {
                let mut v = Vec::new();
                let Some(next) = m.get(&(t + k as i64)) else { return Ok(v) };
                let bound = next - m[&t] + k as f64 * lambda_prime;
                let pts = set.fibre_points(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
                for (xi, y) in pts {
                    let phi = phi_series_from(system, &set.orbit, t, xi, y, k)?[k];
                    if phi - bound > TOLERANCE {
                        v.push(Violation { orbit: o, t, n: k, excess: phi - bound });
                    }
                }
                Ok(v)
            })
            .collect();
        for f in found {
            out.extend(f?);
        }
    }
    Ok(out)
}

/// Times where `C(t+1) − C(t) < min{0, λ' − Φ^K_1(t)} − 10⁻⁹`.
pub fn c_increment_violations(c: &BoundSeries, phi1: &BTreeMap<i64, f64>, lambda_prime: f64) -> Vec<(i64, f64)> {
    let m = c.as_map();
    let mut out = Vec::new();
    for (&t, &ct) in &m {
        let (Some(next), Some(p)) = (m.get(&(t + 1)), phi1.get(&t)) else { continue };
        let excess = 0f64.min(lambda_prime - p) - (next - ct);
        if excess > TOLERANCE {
            out.push((t, excess));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustednessReport {
    /// `(n, max over the ensemble of max(|C(t0+n)|, |C(t0−n)|)/n)`.
    pub slopes: Vec<(usize, f64)>,
    pub threshold: f64,
    /// False when the slope at the largest horizon exceeds `threshold`.
    pub adjusted: bool,
}

/// Growth rate of `|C|` away from `t0`; adjusted variables have slopes tending to 0.
pub fn adjustedness_slope(c_per_orbit: &[BTreeMap<i64, f64>], t0: i64, horizons: &[usize], threshold: f64) -> Result<AdjustednessReport> {
    let mut slopes = Vec::new();
    for &n in horizons {
        if n == 0 {
            return Err(Error::Domain("horizons must be positive".into()));
        }
        let mut worst: f64 = 0.0;
        for c in c_per_orbit {
            for t in [t0 + n as i64, t0 - n as i64] {
                let v = c.get(&t).ok_or_else(|| Error::Domain(format!("C missing at t={t}")))?;
                worst = worst.max(v.abs() / n as f64);
            }
        }
        slopes.push((n, worst));
    }
    let adjusted = slopes.last().is_none_or(|s| s.1 <= threshold);
    Ok(AdjustednessReport { slopes, threshold, adjusted })
}

/// Smallest `n ≥ 1` with `Φ_m/m ≤ λ − δ` for all `m ∈ [n, N_max]` and every
/// series (one per fibre point, each `[Φ_0..Φ_{N_max}]`); `None` if no such `n`.
pub fn semiuniform_entry_time(series: &[Vec<f64>], lambda: f64, delta: f64, n_max: usize) -> Result<Option<usize>> {
    if !(delta > 0.0) {
        return Err(Error::Domain("δ must be positive".into()));
    }
    let target = lambda - delta;
    let mut last_bad = 0;
    for s in series {
        if s.len() <= n_max {
            return Err(Error::Domain("series shorter than N_max".into()));
        }
        for m in (1..=n_max).rev() {
            if m <= last_bad {
                break;
            }
            if s[m] / m as f64 > target {
                last_bad = m;
                break;
            }
        }
    }
    Ok(if last_bad >= n_max { None } else { Some(last_bad + 1) })
}

/// Entry time on the whole stored fibre at `t`.
pub fn entry_time_on_fibre(system: &SkewSystem, set: &RandomSetApprox, t: i64, lambda: f64, delta: f64, n_max: usize) -> Result<Option<usize>> {
    let pts = set.fibre_points(t).ok_or_else(|| Error::Domain(format!("no fibre stored at t={t}")))?;
    let series = pts
        .iter()
        .map(|(xi, y)| phi_series_from(system, &set.orbit, t, *xi, y, n_max))
        .collect::<Result<Vec<_>>>()?;
    semiuniform_entry_time(&series, lambda, delta, n_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupLyapunov {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

/// `(1/n)·` ensemble mean of `Φ^K_n(t)`: an upper proxy for the exponents of
/// invariant measures carried by `K`.
pub fn sup_lyap_over_k(system: &SkewSystem, sets: &[RandomSetApprox], t: i64, n: usize) -> Result<SupLyapunov> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let vals: Vec<Result<f64>> = (0..sets.len()).into_par_iter().map(|i| phi_sup_k(system, &sets[i], t, n).map(|v| v / n as f64)).collect();
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    let (estimate, stderr, _) = mean_stderr(&vals);
    Ok(SupLyapunov { estimate, stderr, n })
}

/// Equally weighted points `T^i(x_i)`, `x_i` a selection in the fibre at time `t − i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FibreMeasure {
    pub t: i64,
    pub weight: f64,
    pub points: Vec<(f64, Vec<f64>)>,
}

impl FibreMeasure {
    /// `∫ f dμ`.
    pub fn average<F: Fn(f64, &[f64]) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(|(xi, y)| f(*xi, y)).sum::<f64>() * self.weight
    }
}

/// Finite-`n` empirical fibre measure at time `t` from a selection rule.
pub fn empirical_fibre_measure_with<S>(system: &SkewSystem, orbit: &BaseOrbit, t: i64, n: usize, select: S) -> Result<FibreMeasure>
where
    S: Fn(i64) -> Result<(f64, Vec<f64>)>,
{
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    orbit.require_span(t - n as i64 + 1, t)?;
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let s = t - i as i64;
        let (xi, y) = select(s)?;
        let start = orbit.shift(s - orbit.origin())?;
        let img = iterate(system, &start, xi, &y, i)?;
        points.push((img.xi, img.y));
    }
    Ok(FibreMeasure { t, weight: 1.0 / n as f64, points })
}

/// Empirical fibre measure using `argmax_on_fibre(·, select_n)` as the selection.
pub fn empirical_fibre_measure(system: &SkewSystem, set: &RandomSetApprox, t: i64, n: usize, select_n: usize) -> Result<FibreMeasure> {
    empirical_fibre_measure_with(system, &set.orbit, t, n, |s| argmax_on_fibre(system, set, s, select_n))
}

/// `λ' = (λ + λ̂_sup)/2`.
pub fn default_lambda_prime(lambda: f64, sup_estimate: f64) -> f64 {
    0.5 * (lambda + sup_estimate)
}

/// Smallest `k ≤ k_max` with `(1/k)·mean Φ_k^K < λ'`.
pub fn default_k<F: Fn(usize) -> Result<f64>>(mean_phi_k: F, lambda_prime: f64, k_max: usize) -> Result<Option<usize>> {
    for k in 1..=k_max {
        if mean_phi_k(k)? / (k as f64) < lambda_prime {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Deliberate corruptions used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeControl {
    /// `C ↦ C/2 − 1`.
    CorruptedC,
    /// `Ĉ_k(t) ↦ Ĉ_k(t) − t`.
    CorruptedCHat,
}

impl NegativeControl {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "corrupted_c" | "corrupted-c" => Ok(NegativeControl::CorruptedC),
            "corrupted_c_hat" | "corrupted-c-hat" => Ok(NegativeControl::CorruptedCHat),
            _ => Err(Error::Config(format!("unknown negative control {s:?}"))),
        }
    }
}

/// Parameters of a full semiuniform run.
#[derive(Debug, Clone)]
pub struct SemiuniformConfig {
    pub lambda: f64,
    pub delta: f64,
    /// Chosen as `(λ + λ̂_sup)/2` when absent.
    pub lambda_prime: Option<f64>,
    pub n_max: usize,
    /// Chosen by [`default_k`] when empty.
    pub ks: Vec<usize>,
    /// `C` and `Ĉ_k` are checked at `t = 0..tested`.
    pub tested: usize,
    pub horizons: Vec<usize>,
    pub adjusted_threshold: f64,
    pub pullback: PullbackSpec,
    pub negative_control: Option<NegativeControl>,
}

impl SemiuniformConfig {
    /// Window radius needed for every orbit.
    pub fn required_radius(&self) -> usize {
        let kmax = self.ks.iter().copied().max().unwrap_or(8);
        let h = self.horizons.iter().copied().max().unwrap_or(0);
        let forward = (self.tested + 1 + (self.n_max + 1) * kmax).max(h + self.n_max);
        let backward = (self.n_max * kmax).max(h) + self.pullback.depth;
        forward.max(backward) + 1
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplementResult {
    pub k: usize,
    pub variant: Variant,
    pub values: Vec<BoundSeries>,
    pub violations: Vec<Violation>,
    pub all_interior: bool,
    /// Sign contract of the variant (`≥ 0` or `≤ 0`) holds everywhere.
    pub sign_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiuniformReport {
    pub model: String,
    pub norm: &'static str,
    pub lambda: f64,
    pub delta: f64,
    pub lambda_prime: f64,
    /// `λ' < λ`; reported rather than enforced.
    pub lambda_prime_below_lambda: bool,
    pub sup_exponent: SupLyapunov,
    pub n_max: usize,
    pub seeds: Vec<u64>,
    pub negative_control: Option<NegativeControl>,
    /// `Φ^K_n(0)` of the first orbit.
    pub phi_k_series: Vec<f64>,
    pub c_values: Vec<BoundSeries>,
    pub c_all_interior: bool,
    pub main_violations: Vec<Violation>,
    pub increment_violations: Vec<(usize, i64, f64)>,
    pub complement: Vec<ComplementResult>,
    pub adjustedness: AdjustednessReport,
    pub entry_times: Vec<Option<usize>>,
}

impl SemiuniformReport {
    /// Human-readable list of failed contracts; empty when everything holds.
    pub fn contract_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.main_violations.is_empty() {
            out.push(format!("main estimate: {} violations", self.main_violations.len()));
        }
        if !self.c_all_interior {
            out.push("C attained on the truncation boundary".into());
        }
        if !self.increment_violations.is_empty() {
            out.push(format!("C increment: {} violations", self.increment_violations.len()));
        }
        for c in &self.complement {
            if !c.violations.is_empty() {
                out.push(format!("complement k={} {}: {} violations", c.k, c.variant.as_str(), c.violations.len()));
            }
            if !c.all_interior {
                out.push(format!("complement k={} {}: sup on truncation boundary", c.k, c.variant.as_str()));
            }
            if !c.sign_ok {
                out.push(format!("complement k={} {}: sign contract broken", c.k, c.variant.as_str()));
            }
        }
        if !self.adjustedness.adjusted {
            out.push("C is not adjusted at the largest horizon".into());
        }
        out
    }

    /// `orbit,t,phi_k_1,C,c_hat_k_nonneg,c_hat_k_nonpos` for the smallest tested `k`.
    pub fn to_csv(&self, phi1: &[BTreeMap<i64, f64>]) -> String {
        let mut b = CsvBuilder::with_header(&["orbit", "t", "phi_k_1", "c", "c_hat_nonneg", "c_hat_nonpos"]);
        let pick = |v: Variant| self.complement.iter().find(|c| c.variant == v);
        let (nn, np) = (pick(Variant::Nonneg), pick(Variant::Nonpos));
        for (o, c) in self.c_values.iter().enumerate() {
            for (i, t) in c.times.iter().enumerate() {
                let get = |r: Option<&ComplementResult>| r.and_then(|r| r.values[o].get(*t)).unwrap_or(f64::NAN);
                let p1 = phi1.get(o).and_then(|m| m.get(t)).copied().unwrap_or(f64::NAN);
                b.row(&[o as i64, *t], &[p1, c.values[i], get(nn), get(np)]);
            }
        }
        b.finish()
    }
}

/// Output of [`run_semiuniform`]: the report plus the per-orbit `Φ^K_1` used for the CSV.
pub struct SemiuniformRun {
    pub report: SemiuniformReport,
    pub phi1: Vec<BTreeMap<i64, f64>>,
}

/// Runs every semiuniform check over an ensemble of orbits.
pub fn run_semiuniform(system: &SkewSystem, orbits: &[BaseOrbit], cfg: &SemiuniformConfig) -> Result<SemiuniformRun> {
    if orbits.is_empty() {
        return Err(Error::Domain("empty orbit ensemble".into()));
    }
    let tested = cfg.tested.max(1) as i64;
    let mut main_times: Vec<i64> = (0..=tested).collect();
    for &h in &cfg.horizons {
        main_times.push(h as i64);
        main_times.push(-(h as i64));
    }
    let sets = orbits.iter().map(|o| pullback(system, o, &cfg.pullback, &main_times)).collect::<Result<Vec<_>>>()?;

    let series: Vec<Result<Vec<(i64, Vec<f64>)>>> = (0..sets.len())
        .into_par_iter()
        .map(|i| {
            sets[i].times.iter().map(|&t| phi_sup_k_series(system, &sets[i], t, cfg.n_max).map(|s| (t, s))).collect()
        })
        .collect();
    let series = series.into_iter().collect::<Result<Vec<_>>>()?;

    let at0: Vec<f64> = series.iter().map(|s| s.iter().find(|x| x.0 == 0).unwrap().1[cfg.n_max] / cfg.n_max as f64).collect();
    let (sup_est, sup_err, _) = mean_stderr(&at0);
    let sup_exponent = SupLyapunov { estimate: sup_est, stderr: sup_err, n: cfg.n_max };
    let lambda_prime = cfg.lambda_prime.unwrap_or_else(|| default_lambda_prime(cfg.lambda, sup_est));

    let mut c_values = series.iter().map(|s| compute_c(s, lambda_prime, cfg.n_max)).collect::<Result<Vec<_>>>()?;
    let c_all_interior = c_values.iter().all(BoundSeries::all_interior);
    let phi1: Vec<BTreeMap<i64, f64>> = series.iter().map(|s| s.iter().map(|(t, v)| (*t, v[1])).collect()).collect();
    let mut increment_violations = Vec::new();
    for (o, (c, p)) in c_values.iter().zip(&phi1).enumerate() {
        increment_violations.extend(c_increment_violations(c, p, lambda_prime).into_iter().map(|(t, e)| (o, t, e)));
    }
    let adjustedness = if cfg.horizons.is_empty() {
        AdjustednessReport { slopes: vec![], threshold: cfg.adjusted_threshold, adjusted: true }
    } else {
        let maps: Vec<_> = c_values.iter().map(BoundSeries::as_map).collect();
        adjustedness_slope(&maps, 0, &cfg.horizons, cfg.adjusted_threshold)?
    };
    if cfg.negative_control == Some(NegativeControl::CorruptedC) {
        c_values = c_values.iter().map(|c| c.map_values(|_, v| v / 2.0 - 1.0)).collect();
    }
    let tested_c: Vec<BoundSeries> = c_values
        .iter()
        .map(|c| {
            let keep: Vec<usize> = (0..c.times.len()).filter(|&i| (0..=tested).contains(&c.times[i])).collect();
            BoundSeries {
                times: keep.iter().map(|&i| c.times[i]).collect(),
                values: keep.iter().map(|&i| c.values[i]).collect(),
                argmax: keep.iter().map(|&i| c.argmax[i]).collect(),
                interior: keep.iter().map(|&i| c.interior[i]).collect(),
            }
        })
        .collect();
    let main_violations = verify_main_estimate(system, &sets, &tested_c, lambda_prime, cfg.n_max)?;

    let entry_times = sets
        .iter()
        .map(|s| entry_time_on_fibre(system, s, 0, cfg.lambda, cfg.delta, cfg.n_max))
        .collect::<Result<Vec<_>>>()?;

    let ks = if cfg.ks.is_empty() {
        let k = default_k(
            |k| {
                let v = sets.iter().map(|s| phi_sup_k(system, s, 0, k)).collect::<Result<Vec<_>>>()?;
                Ok(v.iter().sum::<f64>() / v.len() as f64)
            },
            lambda_prime,
            8,
        )?;
        vec![k.ok_or_else(|| Error::Domain("no k ≤ 8 with mean Φ_k^K < kλ'".into()))?]
    } else {
        cfg.ks.clone()
    };

    let mut complement = Vec::new();
    for &k in &ks {
        let lo = -((cfg.n_max * k) as i64);
        let hi = tested + ((cfg.n_max + 1) * k) as i64;
        let range: Vec<i64> = (lo..=hi).collect();
        let ksets = orbits.iter().map(|o| pullback(system, o, &cfg.pullback, &range)).collect::<Result<Vec<_>>>()?;
        let phi_k: Vec<Result<BTreeMap<i64, f64>>> = (0..ksets.len())
            .into_par_iter()
            .map(|i| {
                let set = &ksets[i];
                let mut m = BTreeMap::new();
                for &t in &set.times {
                    if t + (k as i64) <= hi {
                        m.insert(t, phi_sup_k(system, set, t, k)?);
                    }
                }
                Ok(m)
            })
            .collect();
        let phi_k = phi_k.into_iter().collect::<Result<Vec<_>>>()?;
        let check_times: Vec<i64> = (0..=tested + k as i64).collect();
        for variant in [Variant::Nonneg, Variant::Nonpos] {
            let mut values = phi_k
                .iter()
                .map(|m| compute_c_hat_k(m, k, lambda_prime, cfg.n_max, variant, &check_times))
                .collect::<Result<Vec<_>>>()?;
            let all_interior = values.iter().all(BoundSeries::all_interior);
            let sign_ok = values.iter().all(|s| {
                s.values.iter().all(|v| match variant {
                    Variant::Nonneg => *v >= 0.0,
                    Variant::Nonpos => *v <= 0.0,
                })
            });
            if cfg.negative_control == Some(NegativeControl::CorruptedCHat) {
                values = values.iter().map(|s| s.map_values(|t, v| v - t as f64)).collect();
            }
            let violations = verify_complement(system, &ksets, &values, k, lambda_prime)?;
            complement.push(ComplementResult { k, variant, values, violations, all_interior, sign_ok });
        }
    }

    let report = SemiuniformReport {
        model: system.name.clone(),
        norm: system.norm.as_str(),
        lambda: cfg.lambda,
        delta: cfg.delta,
        lambda_prime,
        lambda_prime_below_lambda: lambda_prime < cfg.lambda,
        sup_exponent,
        n_max: cfg.n_max,
        seeds: orbits.iter().map(BaseOrbit::seed).collect(),
        negative_control: cfg.negative_control,
        phi_k_series: series[0].iter().find(|x| x.0 == 0).unwrap().1.clone(),
        c_values: tested_c,
        c_all_interior,
        main_violations,
        increment_violations,
        complement,
        adjustedness,
        entry_times,
    };
    Ok(SemiuniformRun { report, phi1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::SeedBox;
    use crate::base::sample_orbit;
    use crate::driving::cell_center;
    use crate::models;

    fn spec(depth: usize, grid: usize) -> PullbackSpec {
        PullbackSpec { depth, seed_box: SeedBox::cube(-1.0, 1.0, 1), samples_per_axis: 2, grid }
    }

    #[test]
    fn c_examples() {
        let lpp = -1.0;
        let lp = -0.5;
        let s: Vec<f64> = (0..=20).map(|n| n as f64 * lpp).collect();
        let c = compute_c(&[(0, s)], lp, 20).unwrap();
        assert_eq!(c.values, vec![0.0]);
        assert!(c.all_interior());
        let s: Vec<f64> = (0..=20).map(|n| if n == 0 { 0.0 } else { 1.0 + (n - 1) as f64 * lpp }).collect();
        let c = compute_c(&[(0, s)], lp, 20).unwrap();
        assert_eq!(c.values, vec![1.0 - lp]);
        assert_eq!(c.argmax, vec![1]);
        // growing faster than λ' puts the max on the boundary
        let s: Vec<f64> = (0..=20).map(|n| n as f64 * 0.1).collect();
        assert!(!compute_c(&[(0, s)], lp, 20).unwrap().all_interior());
    }

    #[test]
    fn c_hat_zero_for_subcritical_constant() {
        let m: BTreeMap<i64, f64> = (-100..=100).map(|t| (t, 4.0 * -1.0)).collect();
        for v in [Variant::Nonneg, Variant::Nonpos] {
            let c = compute_c_hat_k(&m, 4, -0.5, 10, v, &[0, 1, 2]).unwrap();
            assert_eq!(c.values, vec![0.0; 3]);
            assert!(c.all_interior());
        }
        assert!(compute_c_hat_k(&m, 4, -0.5, 100, Variant::Nonneg, &[0]).is_err());
    }

    #[test]
    fn phi_sup_and_argmax() {
        let sys = models::builtin("identity").unwrap();
        let o = sample_orbit(&sys.base, 200, 1).unwrap();
        let k = pullback(&sys, &o, &spec(5, 3), &[0]).unwrap();
        assert_eq!(phi_sup_k_series(&sys, &k, 0, 10).unwrap(), vec![0.0; 11]);
        // y-independent: lexicographically smallest
        assert_eq!(argmax_on_fibre(&sys, &k, 0, 3).unwrap(), (cell_center(0, 3), vec![-0.5]));

        let sys = models::builtin("affine_constant").unwrap();
        let o = sample_orbit(&sys.base, 200, 1).unwrap();
        let k = pullback(&sys, &o, &spec(60, 2), &[0]).unwrap();
        assert!((phi_sup_k(&sys, &k, 0, 7).unwrap() - 7.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_larger_derivative() {
        let mut q = models::Params::new();
        q.insert("a_plus".into(), 0.5);
        q.insert("a_minus".into(), 0.3);
        let sys = models::build("two_branch", &q).unwrap();
        let o = sample_orbit(&sys.base, 50, 1).unwrap();
        let cloud = Cloud::new(1, vec![-2.0, 2.0]);
        assert_eq!(argmax_on_cloud(&sys, &o, 0, 0.0, &cloud, 3).unwrap(), vec![2.0]);
    }

    #[test]
    fn identity_main_and_complement_pass() {
        let sys = models::builtin("identity").unwrap();
        let o = sample_orbit(&sys.base, 400, 1).unwrap();
        let k = pullback(&sys, &o, &spec(5, 2), &(-50..=60).collect::<Vec<_>>()).unwrap();
        let lp = 0.1;
        let s: Vec<_> = (0..10).map(|t| (t, phi_sup_k_series(&sys, &k, t, 30).unwrap())).collect();
        let c = compute_c(&s, lp, 30).unwrap();
        assert!(verify_main_estimate(&sys, std::slice::from_ref(&k), std::slice::from_ref(&c), lp, 30).unwrap().is_empty());
        let phi: BTreeMap<i64, f64> = (-50..=59).map(|t| (t, 0.0)).collect();
        let ch = compute_c_hat_k(&phi, 1, lp, 40, Variant::Nonneg, &(0..10).collect::<Vec<_>>()).unwrap();
        assert!(verify_complement(&sys, &[k], &[ch], 1, lp).unwrap().is_empty());
    }

    #[test]
    fn entry_time_examples() {
        let flat = vec![vec![0.0; 11]];
        assert_eq!(semiuniform_entry_time(&flat, 0.1, 0.05, 10).unwrap(), Some(1));
        let lin: Vec<Vec<f64>> = vec![(0..=10).map(|n| n as f64 * 0.5f64.ln()).collect()];
        assert_eq!(semiuniform_entry_time(&lin, -0.6, 0.05, 10).unwrap(), Some(1));
        // bad until m = 4
        let s: Vec<f64> = (0..=10).map(|n| if n <= 4 { 0.0 } else { -(n as f64) }).collect();
        assert_eq!(semiuniform_entry_time(&[s.clone()], -0.5, 0.1, 10).unwrap(), Some(5));
        assert_eq!(semiuniform_entry_time(&flat, -0.5, 0.1, 10).unwrap(), None);
        assert!(semiuniform_entry_time(&flat, 0.1, 0.0, 10).is_err());
    }

    #[test]
    fn adjustedness_examples() {
        let konst: BTreeMap<i64, f64> = (-1000..=1000).map(|t| (t, 3.0)).collect();
        let r = adjustedness_slope(&[konst], 0, &[10, 100, 1000], 0.01).unwrap();
        assert_eq!(r.slopes[2].1, 0.003);
        assert!(r.adjusted);
        let lin: BTreeMap<i64, f64> = (-1000i64..=1000).map(|t| (t, t.abs() as f64)).collect();
        let r = adjustedness_slope(&[lin], 0, &[10, 100, 1000], 0.01).unwrap();
        assert_eq!(r.slopes[2].1, 1.0);
        assert!(!r.adjusted);
    }

    #[test]
    fn fixed_point_measure_collapses() {
        let sys = models::builtin("affine_constant").unwrap();
        let o = sample_orbit(&sys.base, 300, 1).unwrap();
        let k = pullback(&sys, &o, &spec(60, 2), &(-20..=0).collect::<Vec<_>>()).unwrap();
        let mu = empirical_fibre_measure(&sys, &k, 0, 20, 1).unwrap();
        assert_eq!(mu.points.len(), 20);
        for (_, y) in &mu.points {
            assert!((y[0] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_choices() {
        assert_eq!(default_lambda_prime(-0.5, -1.0), -0.75);
        let k = default_k(|k| Ok(if k < 3 { 0.0 } else { -(k as f64) }), -0.5, 8).unwrap();
        assert_eq!(k, Some(3));
    }
}
