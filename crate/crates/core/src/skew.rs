//! Double skew products `T(ω,ξ,y) = (θω, g_ω(ξ), h_{ω,ξ}(y))` and their
//! fibre-derivative cocycles `Φ_n = log‖D_y h^n_{ω,ξ}(y)‖`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::{BaseOrbit, BaseSpec};
use crate::driving::DrivingSystem;
use crate::error::{Error, Result};
use crate::io::CsvBuilder;
use crate::linalg::{Mat, NormKind, MAX_DIM};
use crate::par::*;
use crate::rng::SplitMix;

/// Fibre maps `h_{ω,ξ}: ℝ^d → ℝ^d` with their `y`-Jacobians.
pub trait FibreMap: Send + Sync {
    fn dim(&self) -> usize;

    fn map(&self, payload: &[f64], xi: f64, y: &[f64], out: &mut [f64]);

    fn jacobian(&self, payload: &[f64], xi: f64, y: &[f64]) -> Mat;

    /// Box `[lo, hi]^d` sampled by the finite-difference Jacobian check.
    fn probe_box(&self) -> (f64, f64) {
        (-2.0, 2.0)
    }

    /// False where `h` is known not to be differentiable.
    fn is_smooth_at(&self, _y: &[f64]) -> bool {
        true
    }
}

/// Fibre map backed by closures, for ad-hoc systems.
pub struct ClosureMap<H, J> {
    pub dim: usize,
    pub map: H,
    pub jacobian: J,
}

impl<H, J> FibreMap for ClosureMap<H, J>
where
    H: Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64], f64, &[f64]) -> Mat + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn map(&self, payload: &[f64], xi: f64, y: &[f64], out: &mut [f64]) {
        (self.map)(payload, xi, y, out)
    }
    fn jacobian(&self, payload: &[f64], xi: f64, y: &[f64]) -> Mat {
        (self.jacobian)(payload, xi, y)
    }
}

/// A full double skew product.
#[derive(Clone)]
pub struct SkewSystem {
    pub name: String,
    pub base: BaseSpec,
    pub driving: DrivingSystem,
    pub fibre: Arc<dyn FibreMap>,
    pub norm: NormKind,
}

impl fmt::Debug for SkewSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkewSystem")
            .field("name", &self.name)
            .field("base", &self.base)
            .field("driving", &self.driving)
            .field("dim", &self.fibre.dim())
            .field("norm", &self.norm)
            .finish()
    }
}

/// Number of probe points used when a system is validated at construction.
pub const JACOBIAN_PROBES: usize = 1000;
/// Allowed relative mismatch between `Dh` and central differences.
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;

impl SkewSystem {
    /// Builds the system and validates its Jacobian against finite differences.
    pub fn new(name: impl Into<String>, base: BaseSpec, driving: DrivingSystem, fibre: Arc<dyn FibreMap>) -> Result<Self> {
        base.validate()?;
        let d = fibre.dim();
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::Config(format!("fibre dimension {d} outside 1..={MAX_DIM}")));
        }
        let sys = SkewSystem { name: name.into(), base, driving, fibre, norm: NormKind::Spectral };
        let err = sys.jacobian_check(JACOBIAN_PROBES, 0xC0FFEE)?;
        if err > JACOBIAN_TOLERANCE {
            return Err(Error::Config(format!(
                "{}: Jacobian disagrees with finite differences (relative error {err:.3e})",
                sys.name
            )));
        }
        Ok(sys)
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    pub fn dim(&self) -> usize {
        self.fibre.dim()
    }

    /// Largest relative mismatch between `Dh` and a central-difference
    /// Jacobian over `probes` random points.
    pub fn jacobian_check(&self, probes: usize, seed: u64) -> Result<f64> {
        let d = self.dim();
        let orbit = crate::base::sample_orbit(&self.base, probes.max(1), seed)?;
        let mut rng = SplitMix::new(seed);
        let (lo, hi) = self.fibre.probe_box();
        let mut worst: f64 = 0.0;
        let mut plus = [0.0; MAX_DIM];
        let mut minus = [0.0; MAX_DIM];
        let mut checked = 0;
        let mut attempts = 0;
        while checked < probes && attempts < 20 * probes {
            attempts += 1;
            let payload = orbit.at(checked as i64 - (probes / 2) as i64).unwrap_or(orbit.at(0)?);
            let xi = rng.next_f64();
            let mut y = [0.0; MAX_DIM];
            for v in y.iter_mut().take(d) {
                *v = rng.range(lo, hi);
            }
            let y = &y[..d];
            if !self.fibre.is_smooth_at(y) {
                continue;
            }
            checked += 1;
            let jac = self.fibre.jacobian(payload, xi, y);
            let scale = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| jac.get(i, j).abs()).fold(1.0, f64::max);
            for j in 0..d {
                let h = 1e-6 * y[j].abs().max(1.0);
                let mut yp = [0.0; MAX_DIM];
                let mut ym = [0.0; MAX_DIM];
                yp[..d].copy_from_slice(y);
                ym[..d].copy_from_slice(y);
                yp[j] += h;
                ym[j] -= h;
                if !self.fibre.is_smooth_at(&yp[..d]) || !self.fibre.is_smooth_at(&ym[..d]) {
                    continue;
                }
                self.fibre.map(payload, xi, &yp[..d], &mut plus[..d]);
                self.fibre.map(payload, xi, &ym[..d], &mut minus[..d]);
                for i in 0..d {
                    let fd = (plus[i] - minus[i]) / (2.0 * h);
                    worst = worst.max((fd - jac.get(i, j)).abs() / scale);
                }
            }
        }
        Ok(worst)
    }
}

/// State `(ξ, y)` on the fibre `Ξ × ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FibreState {
    pub xi: f64,
    pub y: Vec<f64>,
}

impl FibreState {
    pub fn new(xi: f64, y: Vec<f64>) -> Self {
        FibreState { xi, y }
    }
}

/// One application of `T` from the orbit origin.
pub fn apply_t(system: &SkewSystem, orbit: &BaseOrbit, state: &FibreState) -> Result<(BaseOrbit, FibreState)> {
    let shifted = orbit.shift(1)?;
    let p = orbit.payload(0)?;
    let d = system.dim();
    let mut out = vec![0.0; d];
    system.fibre.map(p, state.xi, &state.y, &mut out);
    Ok((shifted, FibreState { xi: system.driving.forward(p, state.xi), y: out }))
}

/// `n` applications of `T` from the orbit origin; returns the terminal state.
pub fn iterate(system: &SkewSystem, orbit: &BaseOrbit, xi0: f64, y0: &[f64], n: usize) -> Result<FibreState> {
    let o = orbit.origin();
    orbit.require_span(o, o + n as i64)?;
    let d = system.dim();
    let mut xi = xi0;
    let mut y = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    y[..d].copy_from_slice(y0);
    for i in 0..n {
        let p = orbit.at(o + i as i64)?;
        system.fibre.map(p, xi, &y[..d], &mut next[..d]);
        if next[..d].iter().any(|v| v.is_nan()) {
            return Err(Error::NumericalDomain { step: i, detail: "fibre map produced NaN".into() });
        }
        y = next;
        xi = system.driving.forward(p, xi);
    }
    Ok(FibreState { xi, y: y[..d].to_vec() })
}

/// Result of accumulating the derivative cocycle over `n` steps.
///
/// The product is stored as `direction · e^{log_scale}` so it survives large `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleResult {
    /// `Φ_n`; `-∞` exactly when the product is the zero matrix.
    pub phi_n: f64,
    pub neg_infinite: bool,
    pub direction: Mat,
    pub log_scale: f64,
    pub terminal: FibreState,
}

impl CocycleResult {
    /// The raw product `D_y h^n`; may underflow for large `n`.
    pub fn matrix_product(&self) -> Mat {
        if self.neg_infinite {
            return Mat::zeros(self.direction.dim());
        }
        self.direction.scale(self.log_scale.exp())
    }
}

/// Steps between renormalisations of the running product.
pub const RENORMALIZE_EVERY: usize = 32;

/// Chain-rule product `Dh(step n-1) ⋯ Dh(step 0)` along the orbit from its origin.
pub fn cocycle(system: &SkewSystem, orbit: &BaseOrbit, xi0: f64, y0: &[f64], n: usize) -> Result<CocycleResult> {
    let o = orbit.origin();
    orbit.require_span(o, o + n as i64)?;
    let d = system.dim();
    let mut xi = xi0;
    let mut y = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    y[..d].copy_from_slice(y0);
    let mut product = Mat::identity(d);
    let mut log_scale = 0.0;
    let mut zero = false;
    for i in 0..n {
        let p = orbit.at(o + i as i64)?;
        let jac = system.fibre.jacobian(p, xi, &y[..d]);
        system.fibre.map(p, xi, &y[..d], &mut next[..d]);
        if jac.has_nan() || next[..d].iter().any(|v| v.is_nan()) {
            return Err(Error::NumericalDomain { step: i, detail: format!("NaN in fibre map of {}", system.name) });
        }
        if !zero {
            product = jac.mul(&product);
            if (i + 1) % RENORMALIZE_EVERY == 0 {
                let s = product.norm(system.norm);
                if s == 0.0 {
                    zero = true;
                } else {
                    log_scale += s.ln();
                    product = product.scale(1.0 / s);
                }
            }
        }
        y = next;
        xi = system.driving.forward(p, xi);
    }
    let terminal = FibreState { xi, y: y[..d].to_vec() };
    let s = if zero { 0.0 } else { product.norm(system.norm) };
    if s == 0.0 {
        return Ok(CocycleResult {
            phi_n: f64::NEG_INFINITY,
            neg_infinite: true,
            direction: Mat::zeros(d),
            log_scale: f64::NEG_INFINITY,
            terminal,
        });
    }
    Ok(CocycleResult { phi_n: log_scale + s.ln(), neg_infinite: false, direction: product, log_scale, terminal })
}

/// `[Φ_0 = 0, Φ_1, …, Φ_n]` along one trajectory from the orbit origin.
pub fn phi_series(system: &SkewSystem, orbit: &BaseOrbit, xi0: f64, y0: &[f64], n: usize) -> Result<Vec<f64>> {
    let o = orbit.origin();
    phi_series_from(system, orbit, o, xi0, y0, n)
}

/// As [`phi_series`], starting at absolute time `t`.
pub fn phi_series_from(system: &SkewSystem, orbit: &BaseOrbit, t: i64, xi0: f64, y0: &[f64], n: usize) -> Result<Vec<f64>> {
    orbit.require_span(t, t + n as i64)?;
    let d = system.dim();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut xi = xi0;
    let mut y = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    y[..d].copy_from_slice(y0);
    if d == 1 {
        // log of a scalar product is the running sum of logs
        let mut acc = 0.0;
        for i in 0..n {
            let p = orbit.at(t + i as i64)?;
            let j = system.fibre.jacobian(p, xi, &y[..1]).get(0, 0);
            system.fibre.map(p, xi, &y[..1], &mut next[..1]);
            if j.is_nan() || next[0].is_nan() {
                return Err(Error::NumericalDomain { step: i, detail: format!("NaN in fibre map of {}", system.name) });
            }
            acc += j.abs().ln();
            out.push(acc);
            y = next;
            xi = system.driving.forward(p, xi);
        }
        return Ok(out);
    }
    let mut product = Mat::identity(d);
    let mut acc = 0.0;
    for i in 0..n {
        let p = orbit.at(t + i as i64)?;
        let jac = system.fibre.jacobian(p, xi, &y[..d]);
        system.fibre.map(p, xi, &y[..d], &mut next[..d]);
        if jac.has_nan() || next[..d].iter().any(|v| v.is_nan()) {
            return Err(Error::NumericalDomain { step: i, detail: format!("NaN in fibre map of {}", system.name) });
        }
        if acc != f64::NEG_INFINITY {
            product = jac.mul(&product);
            let s = product.norm(system.norm);
            if s == 0.0 {
                acc = f64::NEG_INFINITY;
            } else {
                acc += s.ln();
                product = product.scale(1.0 / s);
            }
        }
        out.push(acc);
        y = next;
        xi = system.driving.forward(p, xi);
    }
    Ok(out)
}

/// Where the ensemble's initial states were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    SeedBox,
    OnAttractor,
}

#[derive(Debug, Clone)]
pub struct LyapunovSample {
    pub orbit: BaseOrbit,
    pub xi0: f64,
    pub y0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub mean: f64,
    pub stderr: f64,
    /// `Φ_n / n` per sample; `-∞` for singular products.
    pub values: Vec<f64>,
    pub neg_infinite_count: usize,
    pub n: usize,
    pub norm: NormKind,
    pub sampling: Sampling,
}

impl LyapunovReport {
    /// `sample_id,n,phi_n,lambda_hat`.
    pub fn to_csv(&self) -> String {
        let mut b = CsvBuilder::with_header(&["sample_id", "n", "phi_n", "lambda_hat"]);
        for (i, v) in self.values.iter().enumerate() {
            b.row(&[i as i64, self.n as i64], &[v * self.n as f64, *v]);
        }
        b.finish()
    }
}

/// Ensemble estimate of the maximal fibre Lyapunov exponent `Φ_n / n`.
pub fn lyapunov_estimate(system: &SkewSystem, samples: &[LyapunovSample], n: usize, sampling: Sampling) -> Result<LyapunovReport> {
    if n == 0 || samples.is_empty() {
        return Err(Error::Domain("lyapunov estimate needs n >= 1 and a non-empty ensemble".into()));
    }
    let values: Vec<Result<f64>> = (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let s = &samples[i];
            cocycle(system, &s.orbit, s.xi0, &s.y0, n).map(|c| c.phi_n / n as f64)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, stderr, neg) = mean_stderr(&values);
    Ok(LyapunovReport { mean, stderr, values, neg_infinite_count: neg, n, norm: system.norm, sampling })
}

/// Mean and standard error over the finite entries; also returns how many
/// `-∞` entries were excluded.
pub fn mean_stderr(values: &[f64]) -> (f64, f64, usize) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let neg = values.len() - finite.len();
    let m = finite.len();
    if m == 0 {
        return (f64::NEG_INFINITY, f64::NAN, neg);
    }
    let mean = finite.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0, neg);
    }
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt(), neg)
}

/// `Φ_n / n` started on the graph `y = φ(ω, ξ0)`.
pub fn graph_lyapunov<G>(system: &SkewSystem, orbit: &BaseOrbit, graph: G, xi0: f64, n: usize) -> Result<f64>
where
    G: Fn(&BaseOrbit, f64) -> Vec<f64>,
{
    let y0 = graph(orbit, xi0);
    Ok(cocycle(system, orbit, xi0, &y0, n)?.phi_n / n as f64)
}

/// `Φ'_n = max{nλ', Φ_n}`; entry `i` holds `Φ_{i+1}`. `-∞` maps to `nλ'`.
pub fn clamp_subadditive(phi: &[f64], lambda_prime: f64) -> Vec<f64> {
    phi.iter()
        .enumerate()
        .map(|(i, v)| {
            let floor = (i + 1) as f64 * lambda_prime;
            if *v == f64::NEG_INFINITY {
                floor
            } else {
                v.max(floor)
            }
        })
        .collect()
}

/// `max over (n, m)` of `Φ_{n+m}(x) − (Φ_n(T^m x) + Φ_m(x))`; `≤ 0` in exact arithmetic.
pub fn subadditivity_check(
    system: &SkewSystem,
    orbit: &BaseOrbit,
    xi0: f64,
    y0: &[f64],
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let horizon = pairs.iter().map(|(n, m)| n + m).max().unwrap_or(0);
    let from_x = phi_series(system, orbit, xi0, y0, horizon)?;
    let mut ms: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut worst = f64::NEG_INFINITY;
    for m in ms {
        let moved = iterate(system, orbit, xi0, y0, m)?;
        let shifted = orbit.shift(m as i64)?;
        let n_max = pairs.iter().filter(|p| p.1 == m).map(|p| p.0).max().unwrap_or(0);
        let from_tm = phi_series(system, &shifted, moved.xi, &moved.y, n_max)?;
        for &(n, _) in pairs.iter().filter(|p| p.1 == m) {
            let lhs = from_x[n + m];
            let rhs = from_tm[n] + from_x[m];
            let v = if lhs == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else if rhs == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                lhs - rhs
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{sample_orbit, BaseSpec};
    use crate::models;

    fn affine_const(a: f64, b: f64) -> SkewSystem {
        models::affine_system("affine", BaseSpec::uniform(0.2, 0.6, 1), DrivingSystem::identity(), models::AffineFamily::constant(a, b))
            .unwrap()
    }

    #[test]
    fn apply_t_affine_arithmetic() {
        let sys = affine_const(0.5, 1.0);
        let o = sample_orbit(&sys.base, 10, 1).unwrap();
        let (o1, s1) = apply_t(&sys, &o, &FibreState::new(0.2, vec![0.0])).unwrap();
        assert_eq!(o1.origin(), 1);
        assert_eq!(s1.y, vec![1.0]);
        let s3 = iterate(&sys, &o, 0.2, &[0.0], 3).unwrap();
        assert_eq!(s3.y[0], 1.75);
    }

    #[test]
    fn identity_cocycle_is_zero() {
        let sys = models::build("identity", &Default::default()).unwrap();
        let o = sample_orbit(&sys.base, 100, 1).unwrap();
        let (o1, s1) = apply_t(&sys, &o, &FibreState::new(0.3, vec![1.5])).unwrap();
        assert_eq!(s1, FibreState::new(0.3, vec![1.5]));
        assert_eq!(o1.origin(), 1);
        assert_eq!(cocycle(&sys, &o, 0.1, &[0.3], 50).unwrap().phi_n, 0.0);
    }

    #[test]
    fn constant_contraction_cocycle() {
        let sys = affine_const(0.5, 1.0);
        let o = sample_orbit(&sys.base, 100, 1).unwrap();
        let c = cocycle(&sys, &o, 0.0, &[0.0], 10).unwrap();
        assert!((c.phi_n - 10.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((c.phi_n + 6.931_47).abs() < 1e-5);
        // renormalisation keeps huge n finite
        let o = sample_orbit(&sys.base, 5000, 1).unwrap();
        let c = cocycle(&sys, &o, 0.0, &[0.0], 5000).unwrap();
        assert!((c.phi_n / 5000.0 - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(c.matrix_product().get(0, 0), 0.0); // underflows, phi does not
    }

    #[test]
    fn singular_jacobian_gives_sentinel() {
        let sys = affine_const(0.0, 1.0);
        let o = sample_orbit(&sys.base, 100, 1).unwrap();
        let c = cocycle(&sys, &o, 0.0, &[0.0], 40).unwrap();
        assert!(c.neg_infinite);
        assert_eq!(c.phi_n, f64::NEG_INFINITY);
        let s = phi_series(&sys, &o, 0.0, &[0.0], 3).unwrap();
        assert_eq!(s[3], f64::NEG_INFINITY);
    }

    #[test]
    fn nan_names_the_step() {
        let fibre = Arc::new(ClosureMap {
            dim: 1,
            map: |_: &[f64], _: f64, y: &[f64], out: &mut [f64]| out[0] = if y[0] > 2.5 { f64::NAN } else { y[0] + 1.0 },
            jacobian: |_: &[f64], _: f64, _: &[f64]| Mat::scalar(1.0),
        });
        let sys = SkewSystem { name: "nan".into(), base: BaseSpec::uniform(0.0, 1.0, 1), driving: DrivingSystem::identity(), fibre, norm: NormKind::Spectral };
        let o = sample_orbit(&sys.base, 10, 1).unwrap();
        match cocycle(&sys, &o, 0.0, &[0.0], 5) {
            Err(Error::NumericalDomain { step, .. }) => assert_eq!(step, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_subadditive(&[f64::NEG_INFINITY, -5.0], -1.0), vec![-1.0, -2.0]);
        assert_eq!(clamp_subadditive(&[1.0, 2.0, 3.0], -1.0), vec![1.0, 2.0, 3.0]);
        let below: Vec<f64> = (1..=5).map(|n| n as f64 * -3.0).collect();
        assert_eq!(clamp_subadditive(&below, -1.0), (1..=5).map(|n| -(n as f64)).collect::<Vec<_>>());
    }

    #[test]
    fn frobenius_option_is_recorded() {
        let sys = affine_const(0.5, 1.0).with_norm(NormKind::Frobenius);
        let o = sample_orbit(&sys.base, 10, 1).unwrap();
        let s = vec![LyapunovSample { orbit: o, xi0: 0.0, y0: vec![0.0] }];
        let r = lyapunov_estimate(&sys, &s, 5, Sampling::SeedBox).unwrap();
        assert_eq!(r.norm, NormKind::Frobenius);
        assert!((r.mean - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_csv_encodes_neg_inf() {
        let r = LyapunovReport {
            mean: 0.0,
            stderr: 0.0,
            values: vec![f64::NEG_INFINITY],
            neg_infinite_count: 1,
            n: 3,
            norm: NormKind::Spectral,
            sampling: Sampling::SeedBox,
        };
        assert!(r.to_csv().contains("0,3,-inf,-inf"));
    }
}
