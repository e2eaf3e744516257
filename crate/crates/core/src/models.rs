//! Builtin model families with known analytic facts.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::{BaseSpec, GOLDEN_MEAN_FRACTION};
use crate::driving::DrivingSystem;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::skew::{FibreMap, SkewSystem};

/// Named real parameters; missing keys take the catalog defaults.
pub type Params = BTreeMap<String, f64>;

/// Multiplier of an affine fibre map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    Payload { component: usize },
}

/// `h(y) = a(ω)·y + b_0 + b_1·cos 2πξ` on `ℝ¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFamily {
    pub a: Coefficient,
    pub b_constant: f64,
    pub b_cos_amplitude: f64,
}

impl AffineFamily {
    pub fn constant(a: f64, b: f64) -> Self {
        AffineFamily { a: Coefficient::Constant { value: a }, b_constant: b, b_cos_amplitude: 0.0 }
    }

    pub fn constant_cos(a: f64, amplitude: f64) -> Self {
        AffineFamily { a: Coefficient::Constant { value: a }, b_constant: 0.0, b_cos_amplitude: amplitude }
    }

    pub fn random_cos(component: usize, amplitude: f64) -> Self {
        AffineFamily { a: Coefficient::Payload { component }, b_constant: 0.0, b_cos_amplitude: amplitude }
    }

    #[inline]
    pub fn a(&self, payload: &[f64]) -> f64 {
        match self.a {
            Coefficient::Constant { value } => value,
            Coefficient::Payload { component } => payload[component],
        }
    }

    #[inline]
    pub fn b(&self, xi: f64) -> f64 {
        self.b_constant + self.b_cos_amplitude * (TAU * xi).cos()
    }

    /// `sup |a|` over the payload support of `base`.
    pub fn sup_abs_a(&self, base: &BaseSpec) -> f64 {
        match self.a {
            Coefficient::Constant { value } => value.abs(),
            Coefficient::Payload { component } => {
                let (lo, hi) = component_support(base, component);
                lo.abs().max(hi.abs())
            }
        }
    }

    pub fn sup_abs_b(&self) -> f64 {
        self.b_constant.abs() + self.b_cos_amplitude.abs()
    }
}

fn component_support(base: &BaseSpec, component: usize) -> (f64, f64) {
    match base {
        BaseSpec::BernoulliIid { law, .. } => law.support(),
        BaseSpec::IrrationalRotation { .. } => (0.0, 1.0),
        BaseSpec::Product { factors } => {
            let mut offset = 0;
            for f in factors {
                let d = f.dimension();
                if component < offset + d {
                    return component_support(f, component - offset);
                }
                offset += d;
            }
            (f64::NAN, f64::NAN)
        }
    }
}

struct AffineMap(AffineFamily);

impl FibreMap for AffineMap {
    fn dim(&self) -> usize {
        1
    }
    fn map(&self, payload: &[f64], xi: f64, y: &[f64], out: &mut [f64]) {
        out[0] = self.0.a(payload) * y[0] + self.0.b(xi);
    }
    fn jacobian(&self, payload: &[f64], _xi: f64, _y: &[f64]) -> Mat {
        Mat::scalar(self.0.a(payload))
    }
}

/// Builds an affine system over the given base and driving.
pub fn affine_system(name: &str, base: BaseSpec, driving: DrivingSystem, family: AffineFamily) -> Result<SkewSystem> {
    if let Coefficient::Payload { component } = family.a {
        if component >= base.dimension() {
            return Err(Error::Config(format!("payload component {component} outside base dimension {}", base.dimension())));
        }
    }
    SkewSystem::new(name, base, driving, Arc::new(AffineMap(family)))
}

/// `h(y) = sgn(y)·(a_±|y| + b)` with `h(0) = 0`; branch slopes `a_+` for
/// `y > 0` and `a_-` for `y < 0`.
struct TwoBranch {
    a_plus: f64,
    a_minus: f64,
    b: f64,
}

impl FibreMap for TwoBranch {
    fn dim(&self) -> usize {
        1
    }
    fn map(&self, _payload: &[f64], _xi: f64, y: &[f64], out: &mut [f64]) {
        let y = y[0];
        out[0] = if y > 0.0 {
            self.a_plus * y + self.b
        } else if y < 0.0 {
            self.a_minus * y - self.b
        } else {
            0.0
        };
    }
    fn jacobian(&self, _payload: &[f64], _xi: f64, y: &[f64]) -> Mat {
        Mat::scalar(if y[0] >= 0.0 { self.a_plus } else { self.a_minus })
    }
    fn is_smooth_at(&self, y: &[f64]) -> bool {
        y[0].abs() > 1e-3
    }
}

/// `h(y) = 2σ·cos(2πξ)·tanh(y)`.
struct Pinched {
    sigma: f64,
}

impl FibreMap for Pinched {
    fn dim(&self) -> usize {
        1
    }
    fn map(&self, _payload: &[f64], xi: f64, y: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * self.sigma * (TAU * xi).cos() * y[0].tanh();
    }
    fn jacobian(&self, _payload: &[f64], xi: f64, y: &[f64]) -> Mat {
        let sech = 1.0 / y[0].cosh();
        Mat::scalar(2.0 * self.sigma * (TAU * xi).cos() * sech * sech)
    }
}

/// `h(y) = A(ω)·y + c·(cos 2πξ, sin 2πξ)` on `ℝ²`, `A` read row-major from the payload.
struct RandomMatrix {
    forcing: f64,
}

impl FibreMap for RandomMatrix {
    fn dim(&self) -> usize {
        2
    }
    fn map(&self, p: &[f64], xi: f64, y: &[f64], out: &mut [f64]) {
        out[0] = p[0] * y[0] + p[1] * y[1] + self.forcing * (TAU * xi).cos();
        out[1] = p[2] * y[0] + p[3] * y[1] + self.forcing * (TAU * xi).sin();
    }
    fn jacobian(&self, p: &[f64], _xi: f64, _y: &[f64]) -> Mat {
        Mat::from_rows(&[&[p[0], p[1]], &[p[2], p[3]]])
    }
}

/// `h(y) = a(ω)·y + c·y³ + β·cos 2πξ`.
struct Cubic {
    c: f64,
    forcing: f64,
}

impl FibreMap for Cubic {
    fn dim(&self) -> usize {
        1
    }
    fn map(&self, p: &[f64], xi: f64, y: &[f64], out: &mut [f64]) {
        let y = y[0];
        out[0] = p[0] * y + self.c * y * y * y + self.forcing * (TAU * xi).cos();
    }
    fn jacobian(&self, p: &[f64], _xi: f64, y: &[f64]) -> Mat {
        Mat::scalar(p[0] + 3.0 * self.c * y[0] * y[0])
    }
    fn probe_box(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
}

/// `h(y) = y` in any dimension.
struct IdentityMap {
    dim: usize,
}

impl FibreMap for IdentityMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn map(&self, _payload: &[f64], _xi: f64, y: &[f64], out: &mut [f64]) {
        out[..self.dim].copy_from_slice(&y[..self.dim]);
    }
    fn jacobian(&self, _payload: &[f64], _xi: f64, _y: &[f64]) -> Mat {
        Mat::identity(self.dim)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamDoc {
    pub name: &'static str,
    pub default: f64,
    pub range: &'static str,
}

/// A known property of a model together with how it was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct Fact {
    pub value: String,
    pub provenance: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticFacts {
    pub exponent: Fact,
    pub invariant_graph: Fact,
    pub cardinality: Fact,
    pub continuity: Fact,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelCatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub dim: usize,
    pub parameters: Vec<ParamDoc>,
    pub facts: AnalyticFacts,
}

fn fact(value: impl Into<String>, provenance: &'static str) -> Fact {
    Fact { value: value.into(), provenance }
}

fn p(name: &'static str, default: f64, range: &'static str) -> ParamDoc {
    ParamDoc { name, default, range }
}

/// `E log a` for `a ~ U[lo, hi]`, `0 < lo < hi`.
pub fn mean_log_uniform(lo: f64, hi: f64) -> f64 {
    let antiderivative = |x: f64| x * x.ln() - x;
    (antiderivative(hi) - antiderivative(lo)) / (hi - lo)
}

/// Every builtin model.
pub fn catalog() -> Vec<ModelCatalogEntry> {
    vec![
        ModelCatalogEntry {
            name: "identity",
            summary: "h(y) = y with identity driving; no contraction, no expansion",
            dim: 1,
            parameters: vec![p("dim", 1.0, "1..=3")],
            facts: AnalyticFacts {
                exponent: fact("0", "every derivative is the identity"),
                invariant_graph: fact("every constant graph", "h is the identity"),
                cardinality: fact("that of the seed cloud", "nothing moves"),
                continuity: fact("continuous", "clouds are ξ-independent"),
            },
        },
        ModelCatalogEntry {
            name: "affine_random",
            summary: "h(y) = a(ω)·y + cos 2πξ, a ~ U[a_low, a_high], golden-mean quasiperiodic driving",
            dim: 1,
            parameters: vec![p("a_low", 0.2, "(-1, a_high)"), p("a_high", 0.6, "(a_low, 1)"), p("b_amplitude", 1.0, "any"), p("rho", GOLDEN_MEAN_FRACTION, "[0, 1)")],
            facts: AnalyticFacts {
                exponent: fact(format!("{:.10}", mean_log_uniform(0.2, 0.6)), "closed form of E log a over the uniform law"),
                invariant_graph: fact("sum over k>=1 of a(-1)...a(-k+1)·b(ξ_-k)", "backward series, see attractor::affine_graph_oracle"),
                cardinality: fact("1", "contraction onto a single graph"),
                continuity: fact("continuous (Lipschitz in ξ)", "termwise Lipschitz bound of the series"),
            },
        },
        ModelCatalogEntry {
            name: "affine_constant",
            summary: "h(y) = a·y + b + c·cos 2πξ with constant coefficients; identity driving unless rho is given",
            dim: 1,
            parameters: vec![p("a", 0.5, "(-1, 1)"), p("b", 1.0, "any"), p("cos_amplitude", 0.0, "any"), p("rho", 0.0, "[0, 1); 0 selects identity driving")],
            facts: AnalyticFacts {
                exponent: fact("log |a|", "constant derivative"),
                invariant_graph: fact("b/(1-a) + c·(series in cos 2πξ)", "geometric series"),
                cardinality: fact("1", "contraction"),
                continuity: fact("continuous", "geometric series of continuous terms"),
            },
        },
        ModelCatalogEntry {
            name: "two_branch",
            summary: "h(y) = sgn(y)·(a_±|y| + b); two attracting fixed points, not differentiable at 0",
            dim: 1,
            parameters: vec![p("a_plus", 0.5, "[0, 1)"), p("a_minus", 0.5, "[0, 1)"), p("b", 1.0, "(0, inf)")],
            facts: AnalyticFacts {
                exponent: fact("max(log a_plus, log a_minus)", "derivative a_± on each branch"),
                invariant_graph: fact("y = b/(1-a_plus) and y = -b/(1-a_minus)", "fixed points of each branch"),
                cardinality: fact("2", "one fixed point per half-line"),
                continuity: fact("continuous", "ξ-independent fixed points"),
            },
        },
        ModelCatalogEntry {
            name: "pinched_sna",
            summary: "h(y) = 2σ·cos(2πξ)·tanh(y) with golden-mean driving; strange nonchaotic attractor",
            dim: 1,
            parameters: vec![p("sigma", 1.5, "(0, inf)"), p("rho", GOLDEN_MEAN_FRACTION, "irrational in (0, 1)")],
            facts: AnalyticFacts {
                exponent: fact(format!("zero graph: log σ = {:.6} for σ = 1.5", 1.5f64.ln()), "log 2σ + ∫ log|cos 2πξ| dξ = log 2σ - log 2"),
                invariant_graph: fact("y = 0 (repelling for σ > 1) plus a non-continuous attracting graph", "pinching at cos 2πξ = 0"),
                cardinality: fact("non-constant / grid dependent", "observed; hypothesis of negative exponents fails"),
                continuity: fact("discontinuous", "known strange nonchaotic behaviour"),
            },
        },
        ModelCatalogEntry {
            name: "random_matrix",
            summary: "h(y) = A(ω)·y + c·(cos 2πξ, sin 2πξ) on R², A entries i.i.d. U[-s, s]",
            dim: 2,
            parameters: vec![p("scale", 0.5, "(0, inf)"), p("forcing", 0.5, "any"), p("rho", GOLDEN_MEAN_FRACTION, "[0, 1)")],
            facts: AnalyticFacts {
                exponent: fact("no closed form", "estimated by the run"),
                invariant_graph: fact("backward matrix series when the exponent is negative", "linear cocycle"),
                cardinality: fact("1 when the exponent is negative", "contraction"),
                continuity: fact("continuous when the exponent is negative", "series of continuous terms"),
            },
        },
        ModelCatalogEntry {
            name: "cubic_random",
            summary: "h(y) = a(ω)·y + c·y³ + β·cos 2πξ, a ~ U[a_low, a_high]; y-dependent derivative",
            dim: 1,
            parameters: vec![p("a_low", 0.2, "(-1, a_high)"), p("a_high", 0.6, "(a_low, 1)"), p("c", 0.05, "[0, 0.2]"), p("forcing", 0.1, "any"), p("rho", GOLDEN_MEAN_FRACTION, "[0, 1)")],
            facts: AnalyticFacts {
                exponent: fact("near E log a for small forcing", "derivative a + 3cy² close to a on the attractor"),
                invariant_graph: fact("no closed form", "computed by pullback"),
                cardinality: fact("1", "contraction near 0"),
                continuity: fact("continuous", "contraction"),
            },
        },
        ModelCatalogEntry {
            name: "random_rotation",
            summary: "identity fibre map over the random rotation ξ ↦ ξ + α(ω) + τ, α ~ U[0,1)",
            dim: 1,
            parameters: vec![p("tau", 0.37, "[0, 1)")],
            facts: AnalyticFacts {
                exponent: fact("0", "identity fibre map"),
                invariant_graph: fact("every constant graph", "identity fibre map"),
                cardinality: fact("that of the seed cloud", "nothing moves"),
                continuity: fact("continuous", "identity fibre map"),
            },
        },
    ]
}

fn entry(name: &str) -> Result<ModelCatalogEntry> {
    catalog().into_iter().find(|e| e.name == name).ok_or_else(|| Error::Config(format!("unknown model {name:?}")))
}

/// Resolved parameters: defaults overlaid with `params`; unknown keys are rejected.
pub fn resolve_params(name: &str, params: &Params) -> Result<Params> {
    let e = entry(name)?;
    let mut out: Params = e.parameters.iter().map(|d| (d.name.to_string(), d.default)).collect();
    for (k, v) in params {
        if !out.contains_key(k) {
            return Err(Error::Config(format!("model {name} has no parameter {k:?}")));
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("parameter {k} must be finite")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

fn rotation_or_identity(rho: f64) -> Result<DrivingSystem> {
    check((0.0..1.0).contains(&rho), "rho must lie in [0, 1)")?;
    Ok(if rho == 0.0 { DrivingSystem::identity() } else { DrivingSystem::quasiperiodic(rho) })
}

/// The affine family behind `name`, for models that have one.
pub fn affine_family(name: &str, params: &Params) -> Result<Option<AffineFamily>> {
    let q = resolve_params(name, params)?;
    Ok(match name {
        "affine_random" => Some(AffineFamily::random_cos(0, q["b_amplitude"])),
        "affine_constant" => Some(AffineFamily { a: Coefficient::Constant { value: q["a"] }, b_constant: q["b"], b_cos_amplitude: q["cos_amplitude"] }),
        _ => None,
    })
}

/// Instantiates a catalog model.
pub fn build(name: &str, params: &Params) -> Result<SkewSystem> {
    let q = resolve_params(name, params)?;
    match name {
        "identity" => {
            let d = q["dim"];
            check(d.fract() == 0.0 && (1.0..=3.0).contains(&d), "dim must be 1, 2 or 3")?;
            SkewSystem::new(name, BaseSpec::uniform(0.0, 1.0, 1), DrivingSystem::identity(), Arc::new(IdentityMap { dim: d as usize }))
        }
        "affine_random" => {
            let (lo, hi) = (q["a_low"], q["a_high"]);
            check(-1.0 < lo && lo < hi && hi < 1.0, "need -1 < a_low < a_high < 1")?;
            let family = affine_family(name, params)?.expect("affine");
            affine_system(name, BaseSpec::uniform(lo, hi, 1), rotation_or_identity(q["rho"])?, family)
        }
        "affine_constant" => {
            check(q["a"].abs() < 1.0, "need |a| < 1")?;
            let family = affine_family(name, params)?.expect("affine");
            affine_system(name, BaseSpec::uniform(0.0, 1.0, 1), rotation_or_identity(q["rho"])?, family)
        }
        "two_branch" => {
            let (ap, am, b) = (q["a_plus"], q["a_minus"], q["b"]);
            check((0.0..1.0).contains(&ap) && (0.0..1.0).contains(&am), "branch slopes must lie in [0, 1)")?;
            check(b > 0.0, "b must be positive")?;
            SkewSystem::new(name, BaseSpec::uniform(0.0, 1.0, 1), DrivingSystem::identity(), Arc::new(TwoBranch { a_plus: ap, a_minus: am, b }))
        }
        "pinched_sna" => {
            check(q["sigma"] > 0.0, "sigma must be positive")?;
            check(q["rho"] > 0.0, "pinched driving needs rho > 0")?;
            SkewSystem::new(name, BaseSpec::uniform(0.0, 1.0, 1), rotation_or_identity(q["rho"])?, Arc::new(Pinched { sigma: q["sigma"] }))
        }
        "random_matrix" => {
            let s = q["scale"];
            check(s > 0.0, "scale must be positive")?;
            SkewSystem::new(name, BaseSpec::uniform(-s, s, 4), rotation_or_identity(q["rho"])?, Arc::new(RandomMatrix { forcing: q["forcing"] }))
        }
        "cubic_random" => {
            let (lo, hi, c) = (q["a_low"], q["a_high"], q["c"]);
            check(-1.0 < lo && lo < hi && hi < 1.0, "need -1 < a_low < a_high < 1")?;
            check((0.0..=0.2).contains(&c), "c must lie in [0, 0.2]")?;
            SkewSystem::new(name, BaseSpec::uniform(lo, hi, 1), rotation_or_identity(q["rho"])?, Arc::new(Cubic { c, forcing: q["forcing"] }))
        }
        "random_rotation" => {
            check((0.0..1.0).contains(&q["tau"]), "tau must lie in [0, 1)")?;
            SkewSystem::new(name, BaseSpec::uniform(0.0, 1.0, 1), DrivingSystem::random_rotation(q["tau"]), Arc::new(IdentityMap { dim: 1 }))
        }
        _ => unreachable!("resolve_params rejects unknown names"),
    }
}

/// Builds `name` with its defaults.
pub fn builtin(name: &str) -> Result<SkewSystem> {
    build(name, &Params::new())
}

/// Two attracting branch values `(b/(1-a_+), -b/(1-a_-))` of the two-branch model.
pub fn two_branch_fixed_points(a_plus: f64, a_minus: f64, b: f64) -> (f64, f64) {
    (b / (1.0 - a_plus), -b / (1.0 - a_minus))
}

/// Exponent of the pinched model along its zero graph.
pub fn pinched_zero_graph_exponent(sigma: f64) -> f64 {
    (2.0 * sigma).ln() - LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::sample_orbit;
    use crate::skew::{cocycle, iterate};

    #[test]
    fn every_entry_builds_and_passes_jacobian_check() {
        let names: Vec<_> = catalog().iter().map(|e| e.name).collect();
        assert!(names.len() >= 4);
        for n in names {
            let sys = builtin(n).unwrap();
            assert!(sys.jacobian_check(1000, 7).unwrap() <= 1e-6, "{n}");
        }
    }

    #[test]
    fn catalog_facts_have_provenance() {
        for e in catalog() {
            for f in [&e.facts.exponent, &e.facts.invariant_graph, &e.facts.cardinality, &e.facts.continuity] {
                assert!(!f.provenance.is_empty() && !f.value.is_empty(), "{}", e.name);
            }
        }
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        let mut q = Params::new();
        q.insert("a_high".into(), 1.2);
        assert!(matches!(build("affine_random", &q), Err(Error::Config(_))));
        let mut q = Params::new();
        q.insert("bogus".into(), 1.0);
        assert!(matches!(build("two_branch", &q), Err(Error::Config(_))));
        assert!(matches!(build("nope", &Params::new()), Err(Error::Config(_))));
    }

    #[test]
    fn mean_log_uniform_matches_reference() {
        assert!((mean_log_uniform(0.2, 0.6) + 0.961_519_479_4).abs() < 1e-9);
    }

    #[test]
    fn two_branch_fixed_points_are_fixed() {
        let sys = builtin("two_branch").unwrap();
        let o = sample_orbit(&sys.base, 10, 1).unwrap();
        let (hi, lo) = two_branch_fixed_points(0.5, 0.5, 1.0);
        assert_eq!((hi, lo), (2.0, -2.0));
        assert_eq!(iterate(&sys, &o, 0.1, &[hi], 5).unwrap().y[0], hi);
        assert_eq!(iterate(&sys, &o, 0.1, &[lo], 5).unwrap().y[0], lo);
        assert_eq!(iterate(&sys, &o, 0.1, &[0.0], 5).unwrap().y[0], 0.0);
    }

    #[test]
    fn pinched_zero_graph_is_invariant() {
        let sys = builtin("pinched_sna").unwrap();
        let o = sample_orbit(&sys.base, 10, 1).unwrap();
        assert_eq!(iterate(&sys, &o, 0.3, &[0.0], 7).unwrap().y[0], 0.0);
        assert!((pinched_zero_graph_exponent(1.5) - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn random_matrix_cocycle_is_finite() {
        let sys = builtin("random_matrix").unwrap();
        let o = sample_orbit(&sys.base, 200, 3).unwrap();
        assert!(cocycle(&sys, &o, 0.0, &[0.1, 0.2], 200).unwrap().phi_n.is_finite());
    }
}
