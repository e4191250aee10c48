use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use projdyn::cli::config_digest;
use projdyn::fibers::{backward_orbit, multiplicity_kappa, preimages_p1, FiberCloud, FiberMode};
use projdyn::iteration::{green_of_image, green_value};
use projdyn::measures::{
    equilibrium_estimate, fit_rate, pair, EmpiricalMeasure, EquilibriumMethod, TestFunction,
};
use projdyn::{
    evaluate_map, fs_distance, normalize, EndomorphismMap, HomogeneousPolynomial, ProjectivePoint,
    Tolerances,
};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-4.0..4.0f64, -4.0..4.0f64).prop_map(|(re, im)| c(re, im))
}

fn lift(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(complex(), len)
        .prop_filter("nonzero", |v| v.iter().any(|z| z.norm() > 1e-3))
}

fn point(len: usize) -> impl Strategy<Value = ProjectivePoint> {
    lift(len).prop_map(|v| normalize(&v).unwrap())
}

fn binary_map(d: u32) -> impl Strategy<Value = EndomorphismMap> {
    prop::collection::vec(complex(), 2 * (d as usize + 1)).prop_filter_map(
        "degenerate",
        move |coefs| {
            let comps = coefs
                .chunks(d as usize + 1)
                .map(|row| {
                    let terms = row
                        .iter()
                        .enumerate()
                        .map(|(j, a)| (vec![j as u32, d - j as u32], *a));
                    HomogeneousPolynomial::new(2, d, terms).unwrap()
                })
                .collect();
            EndomorphismMap::new(comps, &tol()).ok()
        },
    )
}

fn any_binary_map() -> impl Strategy<Value = EndomorphismMap> {
    prop_oneof![binary_map(2), binary_map(3)]
}

/// Atoms merged by canonical coordinates rounded to 1e-9.
fn atom_table(atoms: &[(ProjectivePoint, u64)]) -> BTreeMap<Vec<i64>, u64> {
    let mut table = BTreeMap::new();
    for (p, w) in atoms {
        let key = p
            .coords()
            .iter()
            .flat_map(|z| [(z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64])
            .collect();
        *table.entry(key).or_insert(0) += w;
    }
    table
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_is_idempotent(p in point(3)) {
        prop_assert_eq!(normalize(p.coords()).unwrap(), p);
    }

    #[test]
    fn distance_triangle_inequality(p in point(2), q in point(2), r in point(2)) {
        let pq = fs_distance(&p, &q).unwrap();
        let qr = fs_distance(&q, &r).unwrap();
        let pr = fs_distance(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
        prop_assert!((pq - fs_distance(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!(pq <= 1.0 + 1e-15);
    }

    #[test]
    fn evaluation_is_scale_invariant(f in any_binary_map(), z in lift(2), s in complex()) {
        prop_assume!(s.norm() > 1e-2);
        let p = normalize(&z).unwrap();
        let scaled: Vec<Complex64> = z.iter().map(|x| x * s).collect();
        let q = normalize(&scaled).unwrap();
        let (fp, _) = evaluate_map(&f, &p).unwrap();
        let (fq, _) = evaluate_map(&f, &q).unwrap();
        prop_assert!(fs_distance(&fp, &fq).unwrap() < 1e-12);
    }

    #[test]
    fn fibers_have_full_multiplicity(f in any_binary_map(), a in point(2)) {
        let set = preimages_p1(&f, &a, &tol()).unwrap();
        prop_assert_eq!(set.total_multiplicity(), f.degree());
        for r in &set.residuals {
            prop_assert!(*r <= 1e-8);
        }
    }

    #[test]
    fn backward_tree_weight_is_d_to_the_n(f in any_binary_map(), a in point(2), n in 0u32..5) {
        let cloud = backward_orbit(&f, &a, n, FiberMode::Exact, &tol()).unwrap();
        prop_assert_eq!(cloud.total_weight(), (f.degree() as u64).pow(n));
    }

    #[test]
    fn green_functional_equation(f in any_binary_map(), z in lift(2), n in 1usize..20) {
        let g = green_value(&f, &z, n).unwrap();
        let g1 = green_value(&f, &z, n + 1).unwrap();
        let d = f.degree() as f64;
        prop_assert!((g1.value - g.value).abs() <= g.map_constant * d.powi(-(n as i32 + 1)) + 1e-12);
        prop_assert!((g1.value - g.value).abs() <= g.tail_bound + 1e-12);
        let image = green_of_image(&f, &z, n).unwrap();
        prop_assert!((image.value / d - g1.value).abs() <= 1e-12 * (1.0 + g1.value.abs()));
    }

    #[test]
    fn chain_rule_for_multiplicities(f in any_binary_map(), x in point(2), m in 1u32..4, n in 1u32..4) {
        let whole = multiplicity_kappa(&f, &x, m + n, &tol()).unwrap();
        let head = multiplicity_kappa(&f, &x, n, &tol()).unwrap();
        let mut y = x.clone();
        for _ in 0..n {
            y = evaluate_map(&f, &y).unwrap().0;
        }
        let tail = multiplicity_kappa(&f, &y, m, &tol()).unwrap();
        prop_assert_eq!(whole.kappa_n, head.kappa_n * tail.kappa_n);
    }

    #[test]
    fn pair_is_linear_and_order_free(
        pts in prop::collection::vec((point(2), 0.01..1.0f64), 1..20),
        s in -3.0..3.0f64,
        t in -3.0..3.0f64,
    ) {
        let mu = EmpiricalMeasure::new(pts.clone()).unwrap();
        let phi = TestFunction::trig_moment(1);
        let psi = TestFunction::bump(ProjectivePoint::affine(c(1.0, 0.0)).unwrap(), 0.7).unwrap();
        let (p1, p2) = (phi.clone(), psi.clone());
        let combo = TestFunction::custom("combo", 1.0, 1.0, move |x| s * p1.eval(x) + t * p2.eval(x));
        let lhs = pair(&mu, &combo).unwrap();
        let rhs = s * pair(&mu, &phi).unwrap() + t * pair(&mu, &psi).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let mut reversed = pts;
        reversed.reverse();
        let nu = EmpiricalMeasure::new(reversed).unwrap();
        prop_assert!((pair(&nu, &phi).unwrap() - pair(&mu, &phi).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_planted_rates(rho in 1.2..4.0f64, noise in prop::collection::vec(-0.1..0.1f64, 12)) {
        let ns: Vec<u32> = (1..=12).collect();
        let errs: Vec<f64> = ns
            .iter()
            .zip(&noise)
            .map(|(n, e)| 0.3 * rho.powi(-(*n as i32)) * (1.0 + e))
            .collect();
        let fit = fit_rate(&ns, &errs, 1e-300).unwrap();
        prop_assert!((fit.fitted_rho / rho - 1.0).abs() < 0.1, "{} vs {}", fit.fitted_rho, rho);
    }

    #[test]
    fn digest_ignores_key_order_and_whitespace(seed in 0u64..1000, n in 1u32..20) {
        let a = format!(r#"{{"map":"power(2)","experiment":"mixing","seed":{seed},"params":{{"n_max":{n},"samples":10}}}}"#);
        let b = format!("{{\n  \"params\": {{ \"samples\": 10, \"n_max\": {n} }},\n  \"seed\": {seed}, \"experiment\": \"mixing\",\n  \"map\": \"power(2)\"\n}}");
        let va: serde_json::Value = serde_json::from_str(&a).unwrap();
        let vb: serde_json::Value = serde_json::from_str(&b).unwrap();
        prop_assert_eq!(config_digest(&va), config_digest(&vb));
    }
}

fn compose(f: &EndomorphismMap, a: &ProjectivePoint, m: u32, n: u32) -> FiberCloud {
    let outer = backward_orbit(f, a, m, FiberMode::Exact, &tol()).unwrap();
    let mut atoms = Vec::new();
    for (b, w) in &outer.atoms {
        let inner = backward_orbit(f, b, n, FiberMode::Exact, &tol()).unwrap();
        atoms.extend(inner.atoms.into_iter().map(|(p, v)| (p, v * w)));
    }
    FiberCloud {
        base: a.clone(),
        depth: m + n,
        atoms,
        mode: FiberMode::Exact,
    }
}

#[test]
fn pullback_is_functorial() {
    let cubic = EndomorphismMap::from_json(
        r#"{"components": [[{"exps": [3, 0], "re": 1}, {"exps": [1, 2], "re": -0.4, "im": 0.3}, {"exps": [0, 3], "re": 0.2}],
                           [{"exps": [0, 3], "re": 1}, {"exps": [2, 1], "re": 0.1}]]}"#,
        &tol(),
    )
    .unwrap();
    let a = ProjectivePoint::affine(c(0.7, -0.2)).unwrap();
    for f in [EndomorphismMap::power(1, 2, &tol()).unwrap(), cubic] {
        let direct = backward_orbit(&f, &a, 4, FiberMode::Exact, &tol()).unwrap();
        let composed = compose(&f, &a, 2, 2);
        assert_eq!(atom_table(&direct.atoms), atom_table(&composed.atoms));
    }
}

fn re_z() -> TestFunction {
    TestFunction::custom("re_z", 1.0, 1.0, |p| {
        let z = p.affine_coordinate().unwrap_or(Complex64::new(0.0, 0.0));
        if z.norm() <= 1.0 {
            z.re
        } else {
            (1.0 / z.conj()).re
        }
    })
}

#[test]
fn sampled_moments_match_exact_fibers() {
    let f = EndomorphismMap::quadratic_family(c(-1.0, 0.0), &tol()).unwrap();
    let a = ProjectivePoint::affine(c(3.0, 0.0)).unwrap();
    let phi = re_z();
    let exact = EmpiricalMeasure::from_cloud(
        &backward_orbit(&f, &a, 12, FiberMode::Exact, &tol()).unwrap(),
    )
    .unwrap();
    for (count, seed) in [(2000usize, 1u64), (8000, 2)] {
        let mode = FiberMode::Sampled { count, seed };
        let sampled =
            EmpiricalMeasure::from_cloud(&backward_orbit(&f, &a, 12, mode, &tol()).unwrap())
                .unwrap();
        let diff = (pair(&sampled, &phi).unwrap() - pair(&exact, &phi).unwrap()).abs();
        assert!(diff <= 4.0 / (count as f64).sqrt(), "count {count}: {diff}");
    }
}

#[test]
fn estimators_agree_on_trig_moments() {
    let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
    let base = ProjectivePoint::affine(c(2.0, 0.0)).unwrap();
    let count = 5000;
    let full = equilibrium_estimate(
        &f,
        &EquilibriumMethod::FullFiber {
            base: base.clone(),
            depth: 12,
        },
        &tol(),
    )
    .unwrap();
    let sampled = equilibrium_estimate(
        &f,
        &EquilibriumMethod::InverseIteration {
            start: base,
            burn_in: 30,
            count,
            seed: 17,
        },
        &tol(),
    )
    .unwrap();
    for m in 1..=4 {
        let phi = TestFunction::trig_moment(m);
        let diff = (pair(&full, &phi).unwrap() - pair(&sampled, &phi).unwrap()).abs();
        assert!(diff <= 5.0 / (count as f64).sqrt(), "m = {m}: {diff}");
    }
}

#[test]
fn successive_full_fiber_pairings_shrink_geometrically() {
    let f = EndomorphismMap::power(1, 2, &tol()).unwrap();
    let base = ProjectivePoint::affine(c(2.0, 0.0)).unwrap();
    let phi = TestFunction::bump(ProjectivePoint::affine(c(1.0, 0.0)).unwrap(), 0.5).unwrap();
    let pairings: Vec<f64> = (6..=12)
        .map(|n| {
            let mu = equilibrium_estimate(
                &f,
                &EquilibriumMethod::FullFiber {
                    base: base.clone(),
                    depth: n,
                },
                &tol(),
            )
            .unwrap();
            pair(&mu, &phi).unwrap()
        })
        .collect();
    let steps: Vec<f64> = pairings.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in steps.windows(2) {
        assert!(w[1] <= 0.9 * w[0], "{steps:?}");
    }
}

#[test]
fn green_tail_bounds_hold_on_random_maps() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let maps = prop::collection::vec(any_binary_map(), 10);
    let points = prop::collection::vec(lift(2), 100);
    let f_all = maps.new_tree(&mut runner).unwrap().current();
    let zs = points.new_tree(&mut runner).unwrap().current();
    for f in &f_all {
        for z in &zs {
            for n in 1..25 {
                let g = green_value(f, z, n).unwrap();
                let g1 = green_value(f, z, n + 1).unwrap();
                assert!((g1.value - g.value).abs() <= g.tail_bound + 1e-12);
            }
        }
    }
}
