//! Measure-preserving base systems sampled on finite two-sided windows.
//!
//! The abstract base `(Ω, θ, ℙ)` is only ever seen through a [`BaseOrbit`]: the
//! payloads at times `-N..=N` of one sampled point, plus a movable origin that
//! plays the role of `θ^k ω`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::*;
use crate::rng::counter_uniform;

/// Distribution of a single i.i.d. payload component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseLaw {
    Uniform { low: f64, high: f64 },
    /// Finite alphabet; weights are normalised on use.
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low >= high {
                    return Err(Error::Config(format!(
                        "uniform law needs finite low < high, got [{low}, {high}]"
                    )));
                }
            }
            NoiseLaw::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::Config(
                        "discrete law needs equally many values and weights (at least one)".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::Config("discrete law has a negative weight".into()));
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config("discrete law weights sum to zero".into()));
                }
            }
        }
        Ok(())
    }

    /// Inverse-CDF transform of a uniform `u ∈ [0,1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            NoiseLaw::Uniform { low, high } => low + (high - low) * u,
            NoiseLaw::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let target = u * total;
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if target < acc {
                        return *v;
                    }
                }
                // only reachable through rounding at u -> 1
                *values
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(v, _)| v)
                    .unwrap_or(&values[values.len() - 1])
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseLaw::Uniform { low, high } => 0.5 * (low + high),
            NoiseLaw::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            NoiseLaw::Uniform { low, high } => (high - low).powi(2) / 12.0,
            NoiseLaw::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let m = self.mean();
                values.iter().zip(weights).map(|(v, w)| w * (v - m).powi(2)).sum::<f64>() / total
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            NoiseLaw::Uniform { low, high } => (*low, *high),
            NoiseLaw::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))),
        }
    }
}

/// Description of a totally ergodic base.
///
/// Rotation angles are irrational by convention; rationality is not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpec {
    BernoulliIid {
        #[serde(flatten)]
        law: NoiseLaw,
        #[serde(default = "one")]
        dimension: usize,
    },
    IrrationalRotation {
        angle: f64,
        /// Payload at time 0. Drawn from the seed when absent.
        #[serde(default)]
        phase: Option<f64>,
    },
    Product { factors: Vec<BaseSpec> },
}

fn one() -> usize {
    1
}

pub const GOLDEN_MEAN_FRACTION: f64 = 0.618_033_988_749_894_9;

impl BaseSpec {
    pub fn uniform(low: f64, high: f64, dimension: usize) -> Self {
        BaseSpec::BernoulliIid { law: NoiseLaw::Uniform { low, high }, dimension }
    }

    pub fn dimension(&self) -> usize {
        match self {
            BaseSpec::BernoulliIid { dimension, .. } => *dimension,
            BaseSpec::IrrationalRotation { .. } => 1,
            BaseSpec::Product { factors } => factors.iter().map(BaseSpec::dimension).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseSpec::BernoulliIid { law, dimension } => {
                if *dimension == 0 {
                    return Err(Error::Config("payload dimension must be positive".into()));
                }
                law.validate()
            }
            BaseSpec::IrrationalRotation { angle, phase } => {
                if !(angle.is_finite() && *angle > 0.0 && *angle < 1.0) {
                    return Err(Error::Config(format!("rotation angle must lie in (0,1), got {angle}")));
                }
                if let Some(q) = small_denominator(*angle) {
                    return Err(Error::Config(format!("rotation angle {angle} is rational with denominator {q}; the base would not be totally ergodic")));
                }
                if let Some(p) = phase {
                    if !p.is_finite() {
                        return Err(Error::Config("rotation phase must be finite".into()));
                    }
                }
                Ok(())
            }
            BaseSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::Config("product base needs at least one factor".into()));
                }
                let rotations = factors.iter().filter(|f| matches!(f, BaseSpec::IrrationalRotation { .. })).count();
                if rotations > 1 {
                    return Err(Error::Config("products of several rotations may fail to be totally ergodic and are refused".into()));
                }
                factors.iter().try_for_each(BaseSpec::validate)
            }
        }
    }

    /// Writes the payload at `time` into `out`; `component_offset` keys the
    /// counter RNG so product factors draw independent streams.
    fn fill(&self, seed: u64, time: i64, component_offset: u64, out: &mut [f64]) {
        match self {
            BaseSpec::BernoulliIid { law, dimension } => {
                for c in 0..*dimension {
                    out[c] = law.quantile(counter_uniform(seed, time, component_offset + c as u64));
                }
            }
            BaseSpec::IrrationalRotation { angle, phase } => {
                let x0 = phase.unwrap_or_else(|| counter_uniform(seed, 0, component_offset | (1 << 63)));
                out[0] = (x0 + time as f64 * angle).rem_euclid(1.0);
                // rem_euclid can round up to exactly 1.0
                if out[0] >= 1.0 {
                    out[0] = 0.0;
                }
            }
            BaseSpec::Product { factors } => {
                let mut offset = 0;
                for f in factors {
                    let d = f.dimension();
                    f.fill(seed, time, component_offset + offset as u64, &mut out[offset..offset + d]);
                    offset += d;
                }
            }
        }
    }
}

/// Denominator `q ≤ 1000` with `|angle − p/q| < 1e-12`, if any.
fn small_denominator(angle: f64) -> Option<u64> {
    (1..=1000u64).find(|&q| {
        let x = angle * q as f64;
        (x - x.round()).abs() < 1e-12 * q as f64
    })
}

/// A sampled two-sided window `θ^n ω`, `n ∈ [-N, N]`, with a movable origin.
///
/// Immutable; shifting shares the payload buffer.
#[derive(Debug, Clone)]
pub struct BaseOrbit {
    radius: usize,
    dim: usize,
    origin: i64,
    seed: u64,
    payloads: Arc<[f64]>,
}

impl PartialEq for BaseOrbit {
    fn eq(&self, other: &Self) -> bool {
        self.radius == other.radius
            && self.dim == other.dim
            && self.origin == other.origin
            && self.seed == other.seed
            && self.payloads == other.payloads
    }
}

/// Samples the window `[-radius, radius]` of the base described by `spec`.
pub fn sample_orbit(spec: &BaseSpec, radius: usize, seed: u64) -> Result<BaseOrbit> {
    if radius == 0 {
        return Err(Error::Config("window radius must be at least 1".into()));
    }
    spec.validate()?;
    let dim = spec.dimension();
    let len = 2 * radius + 1;
    let rows: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; dim];
            spec.fill(seed, i as i64 - radius as i64, 0, &mut row);
            row
        })
        .collect();
    let payloads: Arc<[f64]> = rows.into_iter().flatten().collect::<Vec<_>>().into();
    Ok(BaseOrbit { radius, dim, origin: 0, seed, payloads })
}

impl BaseOrbit {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn contains(&self, time: i64) -> bool {
        time.unsigned_abs() <= self.radius as u64
    }

    fn window_error(&self, time: i64) -> Error {
        Error::OutOfWindow { index: time, required: time.unsigned_abs(), radius: self.radius as u64 }
    }

    /// Payload at absolute time index `time`.
    pub fn at(&self, time: i64) -> Result<&[f64]> {
        if !self.contains(time) {
            return Err(self.window_error(time));
        }
        let i = (time + self.radius as i64) as usize;
        Ok(&self.payloads[i * self.dim..(i + 1) * self.dim])
    }

    /// Payload at `offset` steps from the origin, i.e. the payload of `θ^offset ω`.
    pub fn payload(&self, offset: i64) -> Result<&[f64]> {
        self.at(self.origin + offset)
    }

    /// Checks that absolute times `from..=to` all lie inside the window.
    pub fn require_span(&self, from: i64, to: i64) -> Result<()> {
        let (lo, hi) = if from <= to { (from, to) } else { (to, from) };
        if !self.contains(lo) {
            return Err(self.window_error(lo));
        }
        if !self.contains(hi) {
            return Err(self.window_error(hi));
        }
        Ok(())
    }

    /// `θ^k`: moves the origin; never re-samples.
    pub fn shift(&self, k: i64) -> Result<BaseOrbit> {
        let origin = self.origin + k;
        if !self.contains(origin) {
            return Err(self.window_error(origin));
        }
        Ok(BaseOrbit { origin, ..self.clone() })
    }

    /// `(1/n) Σ_{i<n} f(payload at origin+i)`.
    pub fn birkhoff_average<F: Fn(&[f64]) -> f64>(&self, f: F, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("birkhoff average needs n >= 1".into()));
        }
        self.require_span(self.origin, self.origin + n as i64 - 1)?;
        let mut sum = 0.0;
        for i in 0..n as i64 {
            sum += f(self.payload(i)?);
        }
        Ok(sum / n as f64)
    }

    /// Debug dump: `time_index,p0,p1,...` for the whole window.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_index");
        for c in 0..self.dim {
            let _ = write!(s, ",p{c}");
        }
        s.push('\n');
        for t in -(self.radius as i64)..=self.radius as i64 {
            let _ = write!(s, "{t}");
            for v in self.at(t).expect("in window") {
                let _ = write!(s, ",{}", crate::io::fmt_f64(*v));
            }
            s.push('\n');
        }
        s
    }
}
