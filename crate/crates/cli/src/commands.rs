//! Subcommand pipelines. Each returns its artifacts in memory; `main` writes
//! them once at the end together with the manifest.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use skewdyn::attractor::{
    affine_graph_oracle, continuity_modulus, covering_monotonicity_check, default_cluster_radius, fibre_cardinality,
    invariance_residual, min_separation_all, pullback, pullback_range,
};
use skewdyn::base::{sample_orbit, BaseOrbit};
use skewdyn::driving::{
    cell_center, cell_of, default_test_points, forward_orbit_of_point, minimality_diagnostic, omega_limit,
    subsection_omega_limit, weyl_csv, weyl_sums, RandomPoint,
};
use skewdyn::io::CsvBuilder;
use skewdyn::models::{self, affine_family};
use skewdyn::semiuniform::{
    compute_c_hat_k, default_k, default_lambda_prime, phi_sup_k, run_semiuniform, SemiuniformConfig,
};
use skewdyn::skew::{lyapunov_estimate, LyapunovSample, Sampling, SkewSystem};
use skewdyn::{Error, Result};

use crate::config::ExperimentConfig;

#[derive(Debug, Default)]
pub struct Outcome {
    pub window_radius: Option<usize>,
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub failures: Vec<String>,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }
}

fn orbits(sys: &SkewSystem, cfg: &ExperimentConfig, radius: usize) -> Result<Vec<BaseOrbit>> {
    cfg.seeds.iter().map(|&s| sample_orbit(&sys.base, radius, s)).collect()
}

pub fn lyapunov(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.lyapunov;
    let n = s.n;
    let d = sys.dim();
    let (radius, samples) = match s.sampling {
        Sampling::SeedBox => {
            let y0 = s.y0.clone().unwrap_or_else(|| vec![0.0; d]);
            if y0.len() != d {
                return Err(Error::Config(format!("lyapunov.y0 has {} components, model needs {d}", y0.len())));
            }
            let r = cfg.window_radius.unwrap_or(n.div_ceil(2));
            let samples = orbits(sys, cfg, r)?
                .into_iter()
                .map(|o| Ok(LyapunovSample { orbit: o.shift(-(r as i64))?, xi0: s.xi0, y0: y0.clone() }))
                .collect::<Result<Vec<_>>>()?;
            (r, samples)
        }
        Sampling::OnAttractor => {
            let r = cfg.window_radius.unwrap_or(n + cfg.depth);
            let spec = cfg.pullback_spec(sys, cfg.grid);
            let cell = cell_of(s.xi0, cfg.grid);
            let samples = orbits(sys, cfg, r)?
                .into_iter()
                .map(|o| {
                    let k = pullback(sys, &o, &spec, &[0])?;
                    let y0 = k.fibre(0, cell).expect("fibre at 0").point(0).to_vec();
                    Ok(LyapunovSample { orbit: o, xi0: cell_center(cell, cfg.grid), y0 })
                })
                .collect::<Result<Vec<_>>>()?;
            (r, samples)
        }
    };
    let report = lyapunov_estimate(sys, &samples, n, s.sampling)?;
    let mut out = Outcome { window_radius: Some(radius), ..Default::default() };
    if !report.mean.is_finite() {
        out.failures.push(format!("ensemble mean is not finite ({} singular samples)", report.neg_infinite_count));
    }
    out.file("lyapunov.csv", report.to_csv());
    out.summary = json!({
        "mean": report.mean,
        "stderr": report.stderr,
        "n": n,
        "samples": report.values.len(),
        "neg_infinite_count": report.neg_infinite_count,
        "sampling": report.sampling,
    });
    Ok(out)
}

pub fn pullback_cmd(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.pullback;
    if p.times.is_empty() {
        return Err(Error::Config("pullback.times is empty".into()));
    }
    let span = p.times.iter().map(|t| t.unsigned_abs() as usize).max().unwrap();
    let radius = cfg.window_radius.unwrap_or(span + cfg.depth.max(p.oracle_terms) + 1);
    let spec = cfg.pullback_spec(sys, cfg.grid);
    let mut family = affine_family(&cfg.model, &cfg.params)?;
    let mut out = Outcome { window_radius: Some(radius), ..Default::default() };
    let mut oracle_csv = CsvBuilder::with_header(&["seed", "t", "cell_index", "oracle", "tail_bound", "max_error", "tolerance"]);
    let mut per_seed = Vec::new();
    let mut oracle_note = Value::Null;
    for (orbit, &seed) in orbits(sys, cfg, radius)?.iter().zip(&cfg.seeds) {
        let k = pullback(sys, orbit, &spec, &p.times)?;
        let residual = match invariance_residual(&k, sys) {
            Ok(r) => Some(r),
            Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        };
        let graph = k.graph_estimate(sys)?;
        let mut worst: f64 = 0.0;
        if let Some(f) = family {
            let sa = f.sup_abs_a(&sys.base);
            let extent = spec.seed_box.lo.iter().chain(&spec.seed_box.hi).fold(0.0f64, |m, v| m.max(v.abs()));
            for &t in &p.times {
                let at = orbit.shift(t)?;
                for c in 0..spec.grid {
                    let want = match affine_graph_oracle(&at, &sys.driving, &f, &sys.base, cell_center(c, spec.grid), p.oracle_terms) {
                        Ok(v) => v,
                        Err(Error::OracleInapplicable(why)) => {
                            oracle_note = json!(why);
                            family = None;
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    // initial distance to the graph is at most |y0| + sup|φ|
                    let reach = extent + f.sup_abs_b() / (1.0 - sa);
                    let tol = want.tail_bound + sa.powi(spec.depth as i32) * reach + 1e-12;
                    let err = k.fibre(t, c).unwrap().points().fold(0.0f64, |m, y| m.max((y[0] - want.value).abs()));
                    worst = worst.max(err);
                    if err > tol {
                        out.failures.push(format!("seed {seed}, t={t}, cell {c}: |pullback − oracle| = {err:e} exceeds {tol:e}"));
                    }
                    oracle_csv.row(&[seed as i64, t, c as i64], &[want.value, want.tail_bound, err, tol]);
                }
                if family.is_none() {
                    break;
                }
            }
        }
        out.file(format!("pullback_{seed}.csv"), k.to_csv());
        out.file(format!("graph_{seed}.csv"), graph.to_csv());
        per_seed.push(json!({
            "seed": seed,
            "max_diameter": k.max_diameter(),
            "invariance_residual": residual,
            "graph_residual": graph.residual,
            "max_oracle_error": family.map(|_| worst),
            "set": k.manifest(sys, residual),
        }));
    }
    if family.is_some() {
        out.file("oracle.csv", oracle_csv.finish());
    }
    out.summary = json!({ "per_seed": per_seed, "oracle_unavailable": oracle_note });
    Ok(out)
}

pub fn cardinality(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let times = cfg.cardinality.times.max(1);
    let radius = cfg.window_radius.unwrap_or(times + cfg.depth + 1);
    let spec = cfg.pullback_spec(sys, cfg.grid);
    let sets = orbits(sys, cfg, radius)?
        .iter()
        .map(|o| pullback_range(sys, o, &spec, 0, times as i64 - 1))
        .collect::<Result<Vec<_>>>()?;
    let radius_c = cfg.cardinality.cluster_radius.unwrap_or_else(|| default_cluster_radius(&sets));
    let mut csv = CsvBuilder::with_header(&["seed", "t", "cell_index", "count"]);
    let mut labels = BTreeMap::new();
    let mut globals = Vec::new();
    for (k, &seed) in sets.iter().zip(&cfg.seeds) {
        let r = fibre_cardinality(k, radius_c)?;
        for (t, c, n) in &r.counts {
            csv.row_str(&[seed.to_string(), t.to_string(), c.to_string(), n.to_string()]);
        }
        labels.insert(seed.to_string(), r.global_label());
        globals.push(r.global);
    }
    let common = globals.iter().all(|g| g.is_some() && *g == globals[0]).then(|| globals[0].unwrap());
    let mut out = Outcome { window_radius: Some(radius), ..Default::default() };
    if common.is_none() {
        out.failures.push(format!("fibre cardinality is not constant across fibres and seeds: {labels:?}"));
    }
    out.file("cardinality.csv", csv.finish());
    out.summary = json!({
        "cluster_radius": radius_c,
        "cardinality": common,
        "per_seed": labels,
        "min_separation": sets.iter().map(|k| min_separation_all(k, radius_c)).fold(f64::INFINITY, f64::min),
    });
    Ok(out)
}

pub fn continuity(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = &cfg.continuity;
    if c.grids.is_empty() {
        return Err(Error::Config("continuity.grids is empty".into()));
    }
    let radius = cfg.window_radius.unwrap_or(c.t.unsigned_abs() as usize + cfg.depth + 1);
    let mut csv = CsvBuilder::with_header(&["seed", "grid", "modulus"]);
    let mut out = Outcome { window_radius: Some(radius), ..Default::default() };
    let mut per_seed = BTreeMap::new();
    for (o, &seed) in orbits(sys, cfg, radius)?.iter().zip(&cfg.seeds) {
        let sets = c.grids.iter().map(|&g| pullback(sys, o, &cfg.pullback_spec(sys, g), &[c.t])).collect::<Result<Vec<_>>>()?;
        let moduli = continuity_modulus(&sets, c.t)?;
        for (g, m) in c.grids.iter().zip(&moduli) {
            csv.row(&[seed as i64, *g as i64], &[*m]);
        }
        let (first, last) = (moduli[0], *moduli.last().unwrap());
        if c.grids.len() > 1 && first > 1e-9 && first / last < 1.2 {
            out.failures.push(format!("seed {seed}: modulus does not shrink under refinement ({moduli:?})"));
        }
        per_seed.insert(seed.to_string(), moduli);
    }
    out.file("continuity.csv", csv.finish());
    out.summary = json!({ "t": c.t, "grids": c.grids, "moduli": per_seed });
    Ok(out)
}

pub fn covering(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let cov = &cfg.covering;
    let tested = cov.tested.max(1) as i64;
    let n_max = cfg.n_max;
    let spec = cfg.pullback_spec(sys, cfg.grid);
    let probe_radius = tested as usize + n_max.max(cov.k_max) + cfg.depth + 1;
    let mut out = Outcome::default();
    let mut csv = CsvBuilder::with_header(&["seed", "t", "cell_index", "p", "n_source", "n_image"]);
    let mut c_csv = CsvBuilder::with_header(&["seed", "t", "c_hat"]);
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let probe_orbit = sample_orbit(&sys.base, probe_radius, seed)?;
        let probe = pullback_range(sys, &probe_orbit, &spec, 0, tested)?;
        let sup = phi_sup_k(sys, &probe, 0, n_max)? / n_max as f64;
        let lambda_prime = match (cfg.lambda_prime, cfg.lambda) {
            (Some(lp), _) => lp,
            (None, Some(l)) => default_lambda_prime(l, sup),
            (None, None) => return Err(Error::Config("covering needs lambda or lambda_prime".into())),
        };
        let k = match cov.k {
            Some(k) if k > 0 => k,
            Some(_) => return Err(Error::Config("covering.k must be positive".into())),
            None => default_k(
                |k| Ok((0..=tested).map(|t| phi_sup_k(sys, &probe, t, k)).collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / (tested + 1) as f64),
                lambda_prime,
                cov.k_max,
            )?
            .ok_or_else(|| Error::Config(format!("no k <= {} has mean sup Φ_k below k·λ' = k·{lambda_prime}", cov.k_max)))?,
        };
        let last = tested - 1 + ((n_max + 1) * k) as i64;
        let radius = cfg.window_radius.unwrap_or((last as usize).max(cfg.depth) + 1);
        out.window_radius = Some(out.window_radius.unwrap_or(0).max(radius));
        let orbit = sample_orbit(&sys.base, radius, seed)?;
        let set = pullback_range(sys, &orbit, &spec, 0, last)?;
        let phi_k: BTreeMap<i64, f64> =
            (0..=last - k as i64).map(|t| phi_sup_k(sys, &set, t, k).map(|v| (t, v))).collect::<Result<_>>()?;
        let times: Vec<i64> = (0..tested + k as i64).collect();
        let c_hat = compute_c_hat_k(&phi_k, k, lambda_prime, n_max, cov.variant, &times)?;
        let report = covering_monotonicity_check(&set, sys, &cfg.ladder, k, &c_hat.as_map(), &(0..tested).collect::<Vec<_>>())?;
        if !report.passed() {
            out.failures.push(format!("seed {seed}: covering violation {} exceeds slack {}", report.max_violation, report.slack));
        }
        if !c_hat.all_interior() {
            out.failures.push(format!("seed {seed}: Ĉ attained on the truncation boundary N_max = {n_max}"));
        }
        // separation of distinct fibre points is bounded below by r·e^{Ĉ(t)}/2
        let bound = (0..tested).filter_map(|t| c_hat.get(t)).map(|v| cfg.ladder.r * v.exp() / 2.0).fold(f64::INFINITY, f64::min);
        let probe_sep = min_separation_all(&probe, default_cluster_radius(std::slice::from_ref(&probe)));
        for (t, c, p, ns, ni) in &report.records {
            csv.row_str(&[seed.to_string(), t.to_string(), c.to_string(), p.to_string(), ns.to_string(), ni.to_string()]);
        }
        for (t, v) in c_hat.times.iter().zip(&c_hat.values) {
            c_csv.row(&[seed as i64, *t], &[*v]);
        }
        per_seed.push(json!({
            "seed": seed,
            "k": k,
            "lambda_prime": lambda_prime,
            "sup_exponent": sup,
            "max_violation": report.max_violation,
            "slack": report.slack,
            "tested": report.tested,
            "c_hat_interior": c_hat.all_interior(),
            "separation_bound": bound,
            "measured_separation": probe_sep,
        }));
    }
    out.file("covering.csv", csv.finish());
    out.file("c_hat.csv", c_csv.finish());
    out.summary = json!({ "variant": cov.variant, "ladder": cfg.ladder, "per_seed": per_seed });
    Ok(out)
}

pub fn semiuniform(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let (Some(lambda), Some(delta)) = (cfg.lambda, cfg.delta) else {
        return Err(Error::Config("semiuniform needs lambda and delta".into()));
    };
    let s = &cfg.semiuniform;
    let run_cfg = SemiuniformConfig {
        lambda,
        delta,
        lambda_prime: cfg.lambda_prime,
        n_max: cfg.n_max,
        ks: s.ks.clone(),
        tested: s.tested,
        horizons: s.horizons.clone(),
        adjusted_threshold: s.adjusted_threshold,
        pullback: cfg.pullback_spec(sys, cfg.grid),
        negative_control: cfg.negative_control,
    };
    let radius = cfg.window_radius.unwrap_or_else(|| run_cfg.required_radius());
    let orbits = orbits(sys, cfg, radius)?;
    let run = run_semiuniform(sys, &orbits, &run_cfg)?;
    let report = run.report;
    let mut out = Outcome { window_radius: Some(radius), failures: report.contract_failures(), ..Default::default() };
    let missing = report.entry_times.iter().filter(|e| e.is_none()).count();
    if missing > 0 {
        out.failures.push(format!("entry time not reached within N_max on {missing} orbits"));
    }

    let mut v = CsvBuilder::with_header(&["check", "orbit", "t", "n", "excess"]);
    for x in &report.main_violations {
        v.row_str(&["main".to_string(), x.orbit.to_string(), x.t.to_string(), x.n.to_string(), skewdyn::io::fmt_f64(x.excess)]);
    }
    for (o, t, e) in &report.increment_violations {
        v.row_str(&["increment".to_string(), o.to_string(), t.to_string(), "1".into(), skewdyn::io::fmt_f64(*e)]);
    }
    for c in &report.complement {
        let name = format!("complement_k{}_{}", c.k, c.variant.as_str());
        for x in &c.violations {
            v.row_str(&[name.clone(), x.orbit.to_string(), x.t.to_string(), x.n.to_string(), skewdyn::io::fmt_f64(x.excess)]);
        }
    }
    let mut e = CsvBuilder::with_header(&["orbit", "seed", "entry_time"]);
    for (i, (t, seed)) in report.entry_times.iter().zip(&cfg.seeds).enumerate() {
        e.row_str(&[i.to_string(), seed.to_string(), t.map_or_else(|| "none".to_string(), |n| n.to_string())]);
    }
    out.file("semiuniform.csv", report.to_csv(&run.phi1));
    out.file("violations.csv", v.finish());
    out.file("entry_times.csv", e.finish());
    out.file("report.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n");
    out.summary = json!({
        "lambda": report.lambda,
        "delta": report.delta,
        "lambda_prime": report.lambda_prime,
        "lambda_prime_below_lambda": report.lambda_prime_below_lambda,
        "sup_exponent": report.sup_exponent,
        "c_all_interior": report.c_all_interior,
        "main_violations": report.main_violations.len(),
        "increment_violations": report.increment_violations.len(),
        "complement": report.complement.iter().map(|c| json!({
            "k": c.k, "variant": c.variant, "violations": c.violations.len(), "all_interior": c.all_interior, "sign_ok": c.sign_ok,
        })).collect::<Vec<_>>(),
        "adjustedness": report.adjustedness,
        "orbits_without_entry": missing,
    });
    Ok(out)
}

pub fn minimality(sys: &SkewSystem, cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = &cfg.minimality;
    let radius = cfg.window_radius.unwrap_or(m.horizon + 1);
    let orbits = orbits(sys, cfg, radius)?;
    let mut points = default_test_points();
    if sys.base.dimension() == 0 {
        points.retain(|p| !matches!(p, RandomPoint::PayloadComponent(_)));
    }
    let verdict = minimality_diagnostic(&orbits, &sys.driving, &points, m.resolution, m.burn_in, m.horizon)?;
    let mut csv = CsvBuilder::with_header(&["seed", "point_index", "occupied_cells", "max_gap"]);
    for (o, seed) in orbits.iter().zip(&cfg.seeds) {
        for (i, p) in points.iter().enumerate() {
            let set = omega_limit(o, &sys.driving, p, m.resolution, m.burn_in, m.horizon)?;
            csv.row(&[*seed as i64, i as i64, set.count() as i64], &[set.max_gap()]);
        }
    }
    let first = forward_orbit_of_point(&orbits[0], &sys.driving, &points[0], m.horizon)?;
    let weyl = weyl_sums(&first[m.burn_in..], m.weyl_modes);
    let mut out = Outcome { window_radius: Some(radius), ..Default::default() };
    if !verdict.fills {
        out.failures.push(format!("omega limits do not fill the {}-cell grid (max gap {})", m.resolution, verdict.max_gap));
    }
    let sub = match m.subsection_below {
        Some(x) => {
            let s = subsection_omega_limit(&orbits, &sys.driving, &points[0], |p| p[0] < x, m.resolution, m.burn_in, m.horizon)?;
            let fills = s.sets.iter().all(|g| g.is_full());
            if !fills {
                out.failures.push(format!("subsection omega limits do not fill the grid (payload[0] < {x})"));
            }
            json!({
                "below": x,
                "fills": fills,
                "max_gap": s.sets.iter().map(|g| g.max_gap()).fold(0.0, f64::max),
                "accepted_fraction": s.accepted_fraction,
                "low_fraction_warning": s.low_fraction_warning,
            })
        }
        None => Value::Null,
    };
    out.file("minimality.csv", csv.finish());
    out.file("weyl.csv", weyl_csv(&weyl));
    out.summary = json!({
        "driving": sys.driving.label(),
        "verdict": verdict,
        "points": points.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>(),
        "subsection": sub,
    });
    Ok(out)
}

pub fn catalog_json() -> Value {
    serde_json::to_value(models::catalog()).expect("catalog serializes")
}

pub fn catalog_text() -> String {
    let mut s = String::new();
    for e in models::catalog() {
        s.push_str(&format!("{:<16} d={}  {}\n", e.name, e.dim, e.summary));
        for p in &e.parameters {
            s.push_str(&format!("    {:<12} default {:<22} range {}\n", p.name, p.default, p.range));
        }
        s.push_str(&format!("    exponent: {}\n", e.facts.exponent.value));
    }
    s
}
