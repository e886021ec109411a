mod common;

use common::*;
use nilflow_core::geometry::GroupLaw;
use nilflow_core::heatkernel::{
    bounded_suite, estimate_expectation, gradient, gradient_raw, inversion_invariance_test,
    log_sobolev_suite, log_sobolev_test, projection_convergence_study, quasi_invariance_test,
    CylinderPolynomial, Verdict,
};
use nilflow_core::stochastic::SimConfig;
use nilflow_core::{zoo, Element};

fn random_poly(dim: usize, seed: u64) -> CylinderPolynomial {
    let mut r = rng(seed);
    let c = random_vec(&mut r, 6, 1.0);
    let i = |k: usize| (seed as usize * 7 + k * 3) % dim;
    let p = CylinderPolynomial::constant(dim, c[0])
        .term(c[1], &[(i(0), 1)])
        .term(c[2], &[(i(1), 2)])
        .term(c[3], &[(i(2), 1), (i(3), 1)])
        .term(c[4], &[(i(4), 3)]);
    if seed % 2 == 0 {
        p.bounded()
    } else {
        p
    }
}

#[test]
fn gradient_matches_central_differences_on_every_model() {
    for desc in zoo_models() {
        let spec = &desc.spec;
        let law = GroupLaw::new(spec);
        for k in 0..100u64 {
            let f = random_poly(spec.dim(), k);
            let g = random_vec(&mut rng(1000 + k), spec.dim(), 1.0);
            let grad = gradient_raw(&law, &f, &g);
            let eps = 1e-5;
            for i in 0..spec.dim() {
                let mut e = vec![0.0; spec.dim()];
                e[i] = eps;
                let plus = f.eval(&law.multiply_raw(&g, &e));
                e[i] = -eps;
                let minus = f.eval(&law.multiply_raw(&g, &e));
                let fd = (plus - minus) / (2.0 * eps);
                assert!(
                    (grad[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{} f#{k} coordinate {i}: {} vs {fd}",
                    desc.name,
                    grad[i]
                );
            }
        }
    }
}

#[test]
fn gradient_special_cases() {
    let ab = abelian(2, 1);
    let c = [0.3, -1.0, 2.0];
    let f = CylinderPolynomial::linear(&c);
    let g = Element::from_coords(2, vec![1.0, 2.0, -3.0]).unwrap();
    assert_eq!(gradient(&ab, &f, &g).unwrap().coords(), &c);
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let k = CylinderPolynomial::constant(3, 4.0);
    assert!(gradient(&heis, &k, &g).unwrap().norm() == 0.0);
    // v-coordinate picks up ½ω(g, h)
    let v = CylinderPolynomial::new(3).term(1.0, &[(2, 1)]);
    let grad = gradient(&heis, &v, &g).unwrap();
    assert!((grad.coords()[0] + 1.0).abs() < 1e-14);
    assert!((grad.coords()[1] - 0.5).abs() < 1e-14);
    assert!((grad.coords()[2] - 1.0).abs() < 1e-14);
}

#[test]
fn expectation_oracles_on_the_abelian_model() {
    let ab = abelian(2, 1);
    let cfg = SimConfig::new(0.8, 8, 40_000, 3);
    let one = estimate_expectation(&ab, &CylinderPolynomial::constant(3, 1.0), &cfg).unwrap();
    assert_eq!(one.details["mean"], 1.0);
    assert_eq!(one.details["stderr"], 0.0);
    let x = CylinderPolynomial::new(3).term(1.0, &[(0, 1)]);
    let r = estimate_expectation(&ab, &x, &cfg).unwrap();
    assert!(r.details["mean"].abs() < 3.0 * r.details["stderr"]);
    let x2 = CylinderPolynomial::new(3).term(1.0, &[(0, 2)]);
    let r = estimate_expectation(&ab, &x2, &cfg).unwrap();
    assert!((r.details["mean"] - 0.8).abs() < 3.0 * r.details["stderr"]);
    assert!(estimate_expectation(&ab, &x, &SimConfig::new(1.0, 4, 1, 0)).is_err());
}

#[test]
fn even_functions_cancel_pathwise_under_inversion() {
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let even = CylinderPolynomial::new(3)
        .term(1.0, &[(2, 2)])
        .term(0.5, &[(0, 1), (1, 1)])
        .bounded();
    let rep =
        inversion_invariance_test(&heis, &[even], &SimConfig::new(1.0, 16, 500, 2), None).unwrap();
    assert_eq!(rep.comparisons[0].lhs, rep.comparisons[0].rhs);
    assert_eq!(rep.comparisons[0].sigma, 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);
}

#[test]
fn quasi_invariance_at_the_identity_is_jensen() {
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let cfg = SimConfig::new(1.0, 64, 20_000, 12);
    let rep = quasi_invariance_test(&heis, &heis.zero(), 2.0, &bounded_suite(&heis), &cfg).unwrap();
    assert_eq!(rep.details["holder_constant"], 1.0);
    assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.comparisons);
}

#[test]
fn entropy_estimates_are_nonnegative() {
    for seed in 0..5 {
        let heis = zoo::heisenberg(2, 1).unwrap().spec;
        let rep = log_sobolev_test(
            &heis,
            &log_sobolev_suite(&heis),
            &SimConfig::new(1.0, 16, 50, seed),
        )
        .unwrap();
        for (k, v) in &rep.details {
            if k.ends_with(".entropy") {
                assert!(*v >= -1e-12);
            }
        }
    }
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let zero = CylinderPolynomial::new(3);
    let rep = log_sobolev_test(&heis, &[zero], &SimConfig::new(1.0, 8, 10, 0)).unwrap();
    assert_eq!(rep.comparisons[0].lhs, 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);
}

#[test]
fn abelian_projection_error_sits_between_reflection_bounds() {
    // the sup dominates the endpoint value, whose mean is (m−ℓ)t, and
    // Doob's L² inequality caps each tail coordinate at 4t
    let ab = abelian(6, 1);
    let cfg = SimConfig::new(1.0, 512, 4000, 5);
    let rep = projection_convergence_study(&ab, &[1, 3, 5, 6], &cfg).unwrap();
    for (ell, tail) in [(1, 5.0), (3, 3.0), (5, 1.0)] {
        let e = rep.details[&format!("err.{ell}")];
        let se = rep.details[&format!("err.{ell}.stderr")];
        assert!(
            e > tail - 3.0 * se && e < 4.0 * tail + 3.0 * se,
            "ℓ={ell}: {e}"
        );
    }
    assert_eq!(rep.details["err.6"], 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);
}

#[test]
fn reports_do_not_depend_on_the_thread_count() {
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let cfg = SimConfig::new(1.0, 32, 3000, 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| log_sobolev_test(&heis, &log_sobolev_suite(&heis), &cfg).unwrap())
    };
    assert_eq!(
        serde_json::to_string(&run(1)).unwrap(),
        serde_json::to_string(&run(4)).unwrap()
    );
}
