mod common;

use common::*;
use nilflow_core::geometry::GroupLaw;
use nilflow_core::heatkernel::mean_stderr;
use nilflow_core::stochastic::{
    c_coefficient, canonical_tau, expansion_endpoint, f_alpha, f_hat_tensor, ito_words, rollout,
    rollout_endpoint, sample_driver, signature_eval, simulate_endpoints, step3_explicit_endpoint,
    BrownianDriver, Engine, ExpansionPlan, ItoWord, SimConfig,
};
use nilflow_core::{zoo, Element, Permutation};
use num_rational::Rational64;

fn rat(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `f_α` from the run structure of `α`: each maximal run of `q` twos
/// between retained times `a < b` contributes `(b − a)^q / q!`.
fn f_alpha_by_runs(alpha: &[u8], s: &[f64], t: f64) -> f64 {
    let mut out = 1.0;
    let mut lo = 0.0;
    let mut run = 0;
    let mut r = 0;
    for &a in alpha {
        if a == 2 {
            run += 1;
        } else {
            let hi = s[r];
            out *= (hi - lo).powi(run) / (1..=run).product::<i32>().max(1) as f64;
            lo = hi;
            run = 0;
            r += 1;
        }
    }
    out * (t - lo).powi(run) / (1..=run).product::<i32>().max(1) as f64
}

#[test]
fn word_enumeration_and_weights() {
    let w2: Vec<(Vec<u8>, Rational64)> = ito_words(2)
        .into_iter()
        .map(|w| (w.0.clone(), w.weight()))
        .collect();
    assert_eq!(
        w2,
        vec![
            (vec![1, 1], Rational64::new(1, 1)),
            (vec![2], Rational64::new(1, 2))
        ]
    );
    let w3: Vec<Vec<u8>> = ito_words(3).into_iter().map(|w| w.0).collect();
    assert_eq!(w3, vec![vec![1, 1, 1], vec![1, 2], vec![2, 1]]);
    assert_eq!(ito_words(1)[0].0, vec![1]);
    // Fibonacci counts
    let counts: Vec<usize> = (1..=8).map(|n| ito_words(n).len()).collect();
    assert_eq!(counts, vec![1, 2, 3, 5, 8, 13, 21, 34]);
    for n in 1..=8 {
        for w in ito_words(n) {
            assert_eq!(w.p() + 2 * w.q(), n);
        }
    }
}

#[test]
fn f_alpha_matches_run_products() {
    let mut r = rng(3);
    for n in 1..=7 {
        for w in ito_words(n) {
            let poly = f_alpha(&w);
            assert_eq!(poly.nvars, w.p() + 1);
            let total: u32 = poly
                .terms
                .keys()
                .map(|e| e.iter().sum::<u32>())
                .max()
                .unwrap_or(0);
            assert!(total as usize <= w.q());
            for _ in 0..5 {
                let t = 1.7;
                let mut s: Vec<f64> = random_vec(&mut r, w.p(), 1.0)
                    .iter()
                    .map(|x| (x + 1.0) * t / 2.0)
                    .collect();
                s.sort_by(f64::total_cmp);
                let mut x = s.clone();
                x.push(t);
                let want = f_alpha_by_runs(w.letters(), &s, t);
                assert!((poly.eval(&x) - want).abs() < 1e-12, "{:?}", w.letters());
            }
        }
    }
}

#[test]
fn descent_counts_and_coefficients() {
    let p = |v: &[usize]| Permutation::from_one_based(v).unwrap();
    assert_eq!(p(&[1, 2, 3]).descents(), 0);
    assert_eq!(p(&[2, 1, 3]).descents(), 1);
    assert_eq!(p(&[3, 2, 1]).descents(), 2);
    assert_eq!(c_coefficient(&p(&[3, 2, 1])), Rational64::new(1, 9));
    // the coefficients annihilate symmetric tensors: Σ_σ c_n^σ = 0 for n ≥ 2
    for n in 2..=6 {
        let s: Rational64 = Permutation::all(n).iter().map(c_coefficient).sum();
        assert_eq!(s, Rational64::new(0, 1), "n={n}");
    }
}

fn dynkin_contracted(
    spec: &nilflow_core::ExtensionSpec,
    w: &ItoWord,
    tau: &Permutation,
) -> Vec<f64> {
    let n = w.order();
    let mut acc: Option<Vec<f64>> = None;
    for sigma in Permutation::all(n) {
        let c = rat(c_coefficient(&sigma));
        let f = f_hat_tensor(spec, &sigma, w, tau).unwrap();
        match acc.as_mut() {
            None => acc = Some(f.iter().map(|x| c * x).collect()),
            Some(a) => a.iter_mut().zip(&f).for_each(|(a, b)| *a += c * b),
        }
    }
    acc.unwrap()
}

#[test]
fn contracted_tensors_do_not_depend_on_the_arrangement() {
    let spec = zoo::default_step3(1).unwrap().spec;
    for w in [ItoWord(vec![1, 2]), ItoWord(vec![2, 1])] {
        let tau = canonical_tau(&w);
        // swapping the two slots of the pair is also admissible
        let mut swapped: Vec<usize> = tau.images().to_vec();
        let pos: Vec<usize> = (0..3).filter(|&i| swapped[i] >= 1).collect();
        swapped.swap(pos[0], pos[1]);
        let alt = Permutation::new(swapped).unwrap();
        let a = dynkin_contracted(&spec, &w, &tau);
        let b = dynkin_contracted(&spec, &w, &alt);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // the expansion plan contracts the Dynkin tensor in natural slot order
        let plan = ExpansionPlan::new(&spec);
        let term = plan.ito_terms().iter().find(|t| t.alpha == w);
        match term {
            Some(t) => {
                for (x, y) in a.iter().zip(&t.tensor) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
            None => assert!(a.iter().all(|x| x.abs() < 1e-12)),
        }
    }
    let bad = Permutation::new(vec![1, 0, 2]).unwrap();
    assert!(f_hat_tensor(&spec, &Permutation::identity(3), &ItoWord(vec![1, 2]), &bad).is_err());
}

#[test]
fn trace_contractions_of_brackets_vanish_where_expected() {
    // n = 2: Σ_i [h_i, h_i] = 0
    let spec = zoo::default_step3(1).unwrap().spec;
    let w = ItoWord(vec![2]);
    let f = f_hat_tensor(&spec, &Permutation::identity(2), &w, &canonical_tau(&w)).unwrap();
    assert!(f.iter().all(|x| x.abs() < 1e-15));
    // Heisenberg: Σ_i [[h_i, k], h_i] = 0
    let heis = zoo::heisenberg(2, 1).unwrap().spec;
    let w = ItoWord(vec![1, 2]);
    let sigma = Permutation::new(vec![1, 0, 2]).unwrap();
    let f = f_hat_tensor(&heis, &sigma, &w, &canonical_tau(&w)).unwrap();
    assert!(f.iter().all(|x| x.abs() < 1e-15));
    // all-ones words reproduce the plain nested bracket
    let w = ItoWord(vec![1, 1]);
    let f = f_hat_tensor(&spec, &Permutation::identity(2), &w, &canonical_tau(&w)).unwrap();
    let d = spec.dim();
    for a in 0..d {
        for b in 0..d {
            let want = spec.bracket(&spec.basis(a), &spec.basis(b)).unwrap();
            for k in 0..spec.n() {
                assert_eq!(f[(a * d + b) * spec.n() + k], want.v()[k]);
            }
        }
    }
}

#[test]
fn chen_identity_on_every_zoo_model() {
    for desc in zoo_models() {
        let spec = &desc.spec;
        for stream in 0..20 {
            let drv = sample_driver(spec.m(), spec.n(), 1.0, 10, 17, stream).unwrap();
            let a = rollout(spec, &drv).unwrap();
            let b = signature_eval(spec, &drv).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-9, "{}", desc.name);
        }
    }
}

#[test]
fn single_segment_and_abelian_cases() {
    let spec = zoo::default_step3(2).unwrap().spec;
    let drv = sample_driver(spec.m(), spec.n(), 1.0, 1, 1, 0).unwrap();
    let end = drv.endpoint();
    for e in [
        rollout(&spec, &drv).unwrap(),
        signature_eval(&spec, &drv).unwrap(),
    ] {
        let want = Element::from_coords(spec.m(), end.clone()).unwrap();
        assert!(e.max_abs_diff(&want) < 1e-14);
    }
    let ab = abelian(3, 2);
    let drv = sample_driver(3, 2, 1.0, 50, 1, 0).unwrap();
    let want = Element::from_coords(3, drv.endpoint()).unwrap();
    for e in [
        rollout(&ab, &drv).unwrap(),
        signature_eval(&ab, &drv).unwrap(),
        expansion_endpoint(&ab, &drv).unwrap(),
    ] {
        assert!(e.max_abs_diff(&want) < 1e-12);
    }
}

#[test]
fn w_part_of_every_engine_is_the_summed_driver() {
    for desc in zoo_models() {
        let spec = &desc.spec;
        let drv = sample_driver(spec.m(), spec.n(), 1.0, 64, 2, 0).unwrap();
        let end = drv.endpoint();
        for e in [
            rollout(spec, &drv).unwrap(),
            signature_eval(spec, &drv).unwrap(),
            expansion_endpoint(spec, &drv).unwrap(),
        ] {
            assert_eq!(e.w(), &end[..spec.m()], "{}", desc.name);
        }
    }
}

#[test]
fn explicit_step3_coding_matches_the_expansion_pathwise() {
    for desc in [
        zoo::default_step3(2).unwrap(),
        zoo::step3_karhunen_loeve(5).unwrap(),
        zoo::default_beta(2, 4).unwrap(),
    ] {
        let spec = &desc.spec;
        let plan = ExpansionPlan::new(spec);
        for stream in 0..10 {
            let drv = sample_driver(spec.m(), spec.n(), 0.8, 128, 23, stream).unwrap();
            let a = plan.endpoint(&drv);
            let b = step3_explicit_endpoint(spec, &drv).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "{}", desc.name);
            }
        }
    }
}

#[test]
fn step2_expansion_is_the_left_point_area() {
    let spec = zoo::heisenberg(2, 1).unwrap().spec;
    let drv = sample_driver(2, 1, 1.0, 200, 5, 1).unwrap();
    let mut b = [0.0; 3];
    let mut area = 0.0;
    for inc in drv.increments() {
        area += b[0] * inc[1] - b[1] * inc[0];
        for (x, d) in b.iter_mut().zip(inc) {
            *x += d;
        }
    }
    let e = expansion_endpoint(&spec, &drv).unwrap();
    assert!((e.v()[0] - (b[2] + 0.5 * area)).abs() < 1e-12);
}

#[test]
fn expansion_and_rollout_agree_in_distribution_on_a_step3_model() {
    let spec = zoo::default_step3(1).unwrap().spec;
    let base = SimConfig::new(1.0, 256, 20_000, 31);
    let a = simulate_endpoints(&spec, &base).unwrap();
    let b = simulate_endpoints(
        &spec,
        &SimConfig::new(1.0, 256, 20_000, 32).with_engine(Engine::Expansion),
    )
    .unwrap();
    for k in spec.m()..spec.dim() {
        for pow in [1, 2] {
            let xa: Vec<f64> = a.iter().map(|g| g.coords()[k].powi(pow)).collect();
            let xb: Vec<f64> = b.iter().map(|g| g.coords()[k].powi(pow)).collect();
            let (ma, sa) = mean_stderr(&xa);
            let (mb, sb) = mean_stderr(&xb);
            let z = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
            assert!(z < 4.0, "coordinate {k} moment {pow}: z = {z}");
        }
    }
}

#[test]
fn driver_second_moment() {
    let n = 20_000;
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            let d = sample_driver(2, 1, 0.7, 4, 8, i).unwrap();
            d.endpoint().iter().map(|x| x * x).sum::<f64>() / 3.0
        })
        .collect();
    let (m, s) = mean_stderr(&xs);
    assert!((m - 0.7).abs() < 3.0 * s, "{m} ± {s}");
}

#[test]
fn area_term_scales_with_time() {
    // With the v-increments removed, the Heisenberg v-coordinate is the
    // Lévy-area term; under t ↦ c t it scales by c, so its second moment
    // scales by c².
    let spec = zoo::heisenberg(2, 1).unwrap().spec;
    let law = GroupLaw::new(&spec);
    let second_moment = |t: f64, seed: u64| {
        let xs: Vec<f64> = (0..20_000u64)
            .map(|i| {
                let d = sample_driver(2, 1, t, 64, seed, i).unwrap();
                let masked: Vec<f64> = d.increments().flat_map(|r| [r[0], r[1], 0.0]).collect();
                let drv =
                    BrownianDriver::from_increments(2, 3, d.times().to_vec(), masked).unwrap();
                rollout_endpoint(&law, &drv)[2].powi(2)
            })
            .collect();
        mean_stderr(&xs)
    };
    let (a1, e1) = second_moment(1.0, 50);
    let (a4, e4) = second_moment(4.0, 51);
    let r = a4 / a1;
    let sr = r * ((e1 / a1).powi(2) + (e4 / a4).powi(2)).sqrt();
    assert!((r - 16.0).abs() < 3.0 * sr, "ratio {r} ± {sr}");
}
