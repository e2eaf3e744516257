use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use skewdyn::attractor::{
    covering_monotonicity_check, extra_uniformity_check, hausdorff_distance, invariance_residual, pullback, pullback_range, Cloud,
    EpsLadder, NeighbourhoodMode, PullbackSpec, SeedBox,
};
use skewdyn::base::{sample_orbit, BaseSpec};
use skewdyn::driving::DrivingSystem;
use skewdyn::linalg::{Mat, NormKind};
use skewdyn::models::{self, affine_system, AffineFamily, Params};
use skewdyn::rng::SplitMix;
use skewdyn::semiuniform::{
    argmax_on_cloud, compute_c, compute_c_hat_k, empirical_fibre_measure, phi_sup_k_series, sup_lyap_over_k, Variant,
};
use skewdyn::skew::{cocycle, lyapunov_estimate, phi_series, ClosureMap, LyapunovSample, Sampling, SkewSystem};
use skewdyn::Error;

fn spec(depth: usize, lo: f64, hi: f64, s: usize, grid: usize) -> PullbackSpec {
    PullbackSpec { depth, seed_box: SeedBox::cube(lo, hi, 1), samples_per_axis: s, grid }
}

#[test]
fn wrong_jacobian_is_rejected_at_construction() {
    let fibre = Arc::new(ClosureMap {
        dim: 1,
        map: |_: &[f64], _: f64, y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0],
        jacobian: |_: &[f64], _: f64, y: &[f64]| Mat::scalar(y[0]),
    });
    let r = SkewSystem::new("bad", BaseSpec::uniform(0.0, 1.0, 1), DrivingSystem::identity(), fibre);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn scalar_cocycle_is_additive() {
    let sys = models::builtin("cubic_random").unwrap();
    let o = sample_orbit(&sys.base, 400, 2).unwrap();
    let s = phi_series(&sys, &o, 0.3, &[0.2], 300).unwrap();
    for m in [1usize, 17, 100] {
        let moved = skewdyn::skew::iterate(&sys, &o, 0.3, &[0.2], m).unwrap();
        let tail = phi_series(&sys, &o.shift(m as i64).unwrap(), moved.xi, &moved.y, 200).unwrap();
        for n in [1usize, 50, 200] {
            assert!((s[n + m] - tail[n] - s[m]).abs() <= 1e-9);
        }
    }
}

#[test]
fn matrix_cocycle_matches_raw_product() {
    let sys = models::builtin("random_matrix").unwrap();
    let o = sample_orbit(&sys.base, 100, 8).unwrap();
    let mut p = Mat::identity(2);
    for i in 0..20 {
        let a = o.payload(i).unwrap();
        p = Mat::from_rows(&[&[a[0], a[1]], &[a[2], a[3]]]).mul(&p);
    }
    for norm in [NormKind::Spectral, NormKind::Frobenius] {
        let s = sys.clone().with_norm(norm);
        let c = cocycle(&s, &o, 0.4, &[0.1, -0.3], 20).unwrap();
        assert!((c.phi_n - p.norm(norm).ln()).abs() < 1e-10);
    }
}

#[test]
fn stderr_shrinks_like_inverse_root() {
    let sys = models::builtin("affine_random").unwrap();
    let mut errs = Vec::new();
    for m in [25u64, 100, 400] {
        let samples: Vec<_> = (0..m)
            .map(|s| LyapunovSample { orbit: sample_orbit(&sys.base, 200, 500 + s).unwrap().shift(-200).unwrap(), xi0: 0.1, y0: vec![0.0] })
            .collect();
        errs.push(lyapunov_estimate(&sys, &samples, 200, Sampling::SeedBox).unwrap().stderr);
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn pullback_diameter_follows_product_of_slopes() {
    let base = BaseSpec::uniform(0.2, 0.6, 1);
    let sys = affine_system("a", base, DrivingSystem::identity(), AffineFamily::random_cos(0, 1.0)).unwrap();
    for seed in 0..5 {
        let o = sample_orbit(&sys.base, 100, seed).unwrap();
        for depth in [5usize, 10, 20] {
            let k = pullback(&sys, &o, &spec(depth, -10.0, 10.0, 2, 1), &[0]).unwrap();
            let log_prod: f64 = (1..=depth as i64).map(|j| o.payload(-j).unwrap()[0].ln()).sum();
            // the two lattice points are 10 apart
            let bound = 10.0 * log_prod.exp();
            let ratio = k.max_diameter() / bound;
            assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
        }
    }
}

#[test]
fn exact_graph_has_negligible_residual() {
    let sys = models::build("affine_constant", &[("cos_amplitude".to_string(), 1.0)].into()).unwrap();
    let o = sample_orbit(&sys.base, 200, 1).unwrap();
    let k = pullback_range(&sys, &o, &spec(80, -3.0, 3.0, 3, 32), 0, 5).unwrap();
    assert!(invariance_residual(&k, &sys).unwrap() <= 1e-10);
    assert!(k.graph_estimate(&sys).unwrap().residual <= 1e-10);
}

#[test]
fn sup_exponent_examples() {
    let sys = models::builtin("affine_random").unwrap();
    let sets: Vec<_> = (0..50)
        .map(|s| pullback(&sys, &sample_orbit(&sys.base, 2200, s).unwrap(), &spec(60, -1.0, 1.0, 1, 2), &[0]).unwrap())
        .collect();
    let r = sup_lyap_over_k(&sys, &sets, 0, 2000).unwrap();
    assert!((r.estimate + 0.9615).abs() <= 0.02, "{r:?}");

    let q: Params = [("a_plus".to_string(), 0.5), ("a_minus".to_string(), 0.3)].into();
    let sys = models::build("two_branch", &q).unwrap();
    let o = sample_orbit(&sys.base, 200, 0).unwrap();
    let k = pullback(&sys, &o, &spec(60, -5.0, 5.0, 4, 2), &[0]).unwrap();
    let r = sup_lyap_over_k(&sys, &[k], 0, 100).unwrap();
    assert!((r.estimate - 0.5f64.ln()).abs() <= 0.01);
}

#[test]
fn two_branch_phi_sup_is_branch_slope() {
    let sys = models::builtin("two_branch").unwrap();
    let o = sample_orbit(&sys.base, 200, 0).unwrap();
    let k = pullback(&sys, &o, &spec(60, -5.0, 5.0, 4, 2), &[0]).unwrap();
    let s = phi_sup_k_series(&sys, &k, 0, 30).unwrap();
    for (n, v) in s.iter().enumerate() {
        assert!((v - n as f64 * 0.5f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn argmax_matches_exhaustive_scan() {
    let sys = models::builtin("cubic_random").unwrap();
    let o = sample_orbit(&sys.base, 100, 4).unwrap();
    let mut rng = SplitMix::new(3);
    for _ in 0..20 {
        let pts: Vec<f64> = (0..15).map(|_| rng.range(-1.0, 1.0)).collect();
        let cloud = Cloud::new(1, pts.clone());
        let got = argmax_on_cloud(&sys, &o, 0, 0.2, &cloud, 3).unwrap();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for y in &pts {
            let v = cocycle(&sys, &o, 0.2, &[*y], 3).unwrap().phi_n;
            if v > best.0 || (v == best.0 && *y < best.1) {
                best = (v, *y);
            }
        }
        assert_eq!(got, vec![best.1]);
    }
}

#[test]
fn empirical_measure_averages_to_the_exponent() {
    let sys = models::builtin("affine_random").unwrap();
    let o = sample_orbit(&sys.base, 10_200, 9).unwrap();
    let k = pullback_range(&sys, &o, &spec(60, -1.0, 1.0, 1, 2), -1, 10_000).unwrap();
    let mut total = 0.0;
    let shifts = 10_000;
    for t in 1..=shifts {
        let mu = empirical_fibre_measure(&sys, &k, t, 2, 1).unwrap();
        let p = o.at(t).unwrap();
        total += mu.average(|xi, y| sys.fibre.jacobian(p, xi, y).get(0, 0).abs().ln());
    }
    let avg = total / shifts as f64;
    assert!((avg + 0.961_52).abs() <= 0.02, "{avg}");
}

#[test]
fn pinched_extra_uniformity_respects_lipschitz_bound() {
    let sys = models::builtin("pinched_sna").unwrap();
    let o = sample_orbit(&sys.base, 1200, 2).unwrap();
    let k = pullback_range(&sys, &o, &spec(1000, 0.5, 2.0, 1, 16), 0, 3).unwrap();
    let eps = 0.1;
    // |∂_y log sech² y| ≤ 2, so shifts up to eps/2 cannot raise Φ_1 by more than eps
    let radii = [0.01, 0.025, 0.05, 0.2, 1.0];
    let r = extra_uniformity_check(&sys, &[k], 1, eps, &radii, NeighbourhoodMode::FibreOnly).unwrap();
    for (radius, _, ok) in &r.per_radius {
        if *radius <= eps / 2.0 {
            assert!(ok);
        }
    }
    assert!(r.largest_passing.unwrap() >= 0.05);
}

#[test]
fn two_branch_covering_is_constant() {
    let sys = models::builtin("two_branch").unwrap();
    let o = sample_orbit(&sys.base, 200, 1).unwrap();
    let k = pullback_range(&sys, &o, &spec(60, -5.0, 5.0, 4, 4), 0, 12).unwrap();
    let c_hat: BTreeMap<i64, f64> = (0..=12).map(|t| (t, 0.0)).collect();
    let r = covering_monotonicity_check(&k, &sys, &EpsLadder { r: 1.0, eta: 0.5, p_max: 6 }, 1, &c_hat, &(0..10).collect::<Vec<_>>()).unwrap();
    assert_eq!(r.max_violation, 0);
    assert!(r.records.iter().all(|x| x.3 == 2 && x.4 == 2));
}

#[test]
fn affine_c_hat_increment_inequality() {
    let sys = models::builtin("affine_random").unwrap();
    let o = sample_orbit(&sys.base, 3000, 5).unwrap();
    let k = 4usize;
    let lp = -0.5;
    let times: Vec<i64> = (-2000..=2000).collect();
    let set = pullback(&sys, &o, &spec(60, -1.0, 1.0, 1, 2), &times).unwrap();
    let phi_k: BTreeMap<i64, f64> = (-2000..=1996).map(|t| (t, phi_sup_k_series(&sys, &set, t, k).unwrap()[k])).collect();
    let tested: Vec<i64> = (0..50).collect();
    let c = compute_c_hat_k(&phi_k, k, lp, 400, Variant::Nonneg, &tested).unwrap();
    for t in 0..46 {
        let lhs = c.get(t + 4).unwrap();
        assert!(lhs >= c.get(t).unwrap() - lp * k as f64 + phi_k[&t] - 1e-9);
    }
}

fn phi_series_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..1.0, 1..60).prop_map(|steps| {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for s in steps {
            acc += s;
            out.push(acc);
        }
        out
    })
}

proptest! {
    #[test]
    fn raising_lambda_prime_never_raises_c(s in phi_series_strategy(), lp in -1.0f64..1.0, bump in 0.0f64..1.0) {
        let n = s.len() - 1;
        let lo = compute_c(&[(0, s.clone())], lp, n).unwrap().values[0];
        let hi = compute_c(&[(0, s)], lp + bump, n).unwrap().values[0];
        prop_assert!(hi <= lo);
        prop_assert!(lo >= 0.0);
    }

    #[test]
    fn c_hat_variants_have_their_signs(vals in prop::collection::vec(-3.0f64..1.0, 200), k in 1usize..4, lp in -1.0f64..0.5) {
        let m: BTreeMap<i64, f64> = vals.iter().enumerate().map(|(i, v)| (i as i64 - 100, *v)).collect();
        let nmax = 90 / k;
        let a = compute_c_hat_k(&m, k, lp, nmax, Variant::Nonneg, &[0, 5]).unwrap();
        let b = compute_c_hat_k(&m, k, lp, nmax, Variant::Nonpos, &[0, 5]).unwrap();
        prop_assert!(a.values.iter().all(|v| *v >= 0.0));
        prop_assert!(b.values.iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn hausdorff_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 1..30),
                             b in prop::collection::vec(-5.0f64..5.0, 1..30),
                             c in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let (a, b, c) = (Cloud::new(1, a), Cloud::new(1, b), Cloud::new(1, c));
        let h = |x: &Cloud, y: &Cloud| hausdorff_distance(x, y).unwrap();
        prop_assert_eq!(h(&a, &b), h(&b, &a));
        prop_assert_eq!(h(&a, &a), 0.0);
        prop_assert_eq!(h(&a, &b) == 0.0, a == b);
        prop_assert!(h(&a, &c) <= h(&a, &b) + h(&b, &c) + 1e-12);
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), j in -50i64..50, k in -50i64..50) {
        let o = sample_orbit(&BaseSpec::uniform(0.0, 1.0, 2), 120, seed).unwrap();
        prop_assert_eq!(o.shift(j).unwrap().shift(k).unwrap(), o.shift(j + k).unwrap());
    }
}
