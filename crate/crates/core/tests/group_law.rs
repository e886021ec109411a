mod common;

use common::*;
use nilflow_core::geometry::{bchd_multiply, inverse, GroupLaw};
use nilflow_core::zoo::{self, ClosedFormLaw};
use nilflow_core::Element;

/// Image of `(X, V)` under `X ↦ β(X)`, `V ↦ V` as an `n×n` matrix, with
/// `v` in the lexicographic `E_ij` basis.
fn beta_image(n: usize, m: usize, beta: &[f64], g: &[f64]) -> Mat {
    let idx: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let nv = idx.len();
    let mut a = mat_zero(n);
    for (k, &(i, j)) in idx.iter().enumerate() {
        let mut x = g[m + k];
        for r in 0..m {
            x += g[r] * beta[r * nv + k];
        }
        a[i][j] = x;
    }
    a
}

#[test]
fn beta_extensions_match_matrix_logarithm_for_steps_three_to_five() {
    for n in 4..=6 {
        let (nv, vb) = zoo::strictly_upper_triangular(n);
        let m = 3;
        let mut r = rng(n as u64);
        let beta = random_vec(&mut r, m * nv, 1.0);
        let spec = zoo::build_beta_extension(m, &beta, nv, &vb).unwrap().spec;
        assert_eq!(spec.step(), n - 1);
        let law = GroupLaw::new(&spec);
        for _ in 0..200 {
            let g = random_vec(&mut r, spec.dim(), 1.0);
            let h = random_vec(&mut r, spec.dim(), 1.0);
            let prod = law.multiply_raw(&g, &h);
            let want = matrix_bch(&beta_image(n, m, &beta, &g), &beta_image(n, m, &beta, &h));
            let got = beta_image(n, m, &beta, &prod);
            for i in 0..n {
                for j in 0..n {
                    assert!((want[i][j] - got[i][j]).abs() < 1e-11, "n={n} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn closed_form_laws_agree_with_bchd_on_every_model_with_an_oracle() {
    let mut r = rng(21);
    for desc in zoo_models()
        .into_iter()
        .chain([zoo::default_step2(4).unwrap()])
    {
        let Some(oracle) = desc.oracle.as_ref() else {
            continue;
        };
        let spec = &desc.spec;
        for _ in 0..300 {
            let g = Element::from_coords(spec.m(), random_vec(&mut r, spec.dim(), 2.0)).unwrap();
            let h = Element::from_coords(spec.m(), random_vec(&mut r, spec.dim(), 2.0)).unwrap();
            let a = bchd_multiply(spec, &g, &h).unwrap();
            let b = oracle.multiply(&g, &h);
            assert!(a.max_abs_diff(&b) < 1e-12, "{}", desc.name);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn sign_variants_of_the_closed_forms_break_the_power_law() {
    // g·g = 2g holds for any BCH-type law; the variants with the opposite
    // sign on the γ terms do not satisfy it, the implemented forms do.
    let mut r = rng(5);
    let d2 = zoo::default_step2(2).unwrap();
    let d3 = zoo::default_step3(2).unwrap();
    let (
        Some(ClosedFormLaw::Step2R2R { gamma: g2, .. }),
        Some(ClosedFormLaw::Step3R6 { gamma: g3, .. }),
    ) = (d2.oracle.clone(), d3.oracle.clone())
    else {
        panic!("missing oracles");
    };

    let g = Element::from_coords(d2.spec.m(), random_vec(&mut r, d2.spec.dim(), 1.0)).unwrap();
    let gg = d2.oracle.as_ref().unwrap().multiply(&g, &g);
    assert!(gg.max_abs_diff(&g.scale(2.0)) < 1e-14);
    let gw = dot(&g2, g.w());
    let v = g.v();
    // third coordinate with `+γ(w')(v1−v2)` in place of the minus sign
    let variant = 2.0 * v[2] + 0.5 * (gw * (v[0] - v[1]) + gw * (v[0] - v[1]));
    assert!((variant - 2.0 * v[2]).abs() > 1e-3);

    let g = Element::from_coords(d3.spec.m(), random_vec(&mut r, d3.spec.dim(), 1.0)).unwrap();
    let gg = d3.oracle.as_ref().unwrap().multiply(&g, &g);
    assert!(gg.max_abs_diff(&g.scale(2.0)) < 1e-14);
    let gw = dot(&g3, g.w());
    let v = g.v();
    let lap = |a: f64, b: f64, c: f64| a - 2.0 * b + c;
    // last coordinate with the cross term taken on `v − v'`
    let third = 2.0 * gw * gw * lap(v[0], v[1], v[2]) - gw * gw * lap(0.0, 0.0, 0.0);
    assert!((third / 12.0).abs() > 1e-4);
}

#[test]
fn inverse_and_identity() {
    for desc in zoo_models() {
        let spec = &desc.spec;
        let mut r = rng(9);
        let g = Element::from_coords(spec.m(), random_vec(&mut r, spec.dim(), 1.0)).unwrap();
        let e = spec.zero();
        assert!(bchd_multiply(spec, &g, &inverse(&g)).unwrap().norm() < 1e-13);
        assert_eq!(bchd_multiply(spec, &g, &e).unwrap(), g);
        assert_eq!(bchd_multiply(spec, &e, &g).unwrap(), g);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let spec = zoo::heisenberg(2, 1).unwrap().spec;
    let g = Element::zeros(3, 1);
    assert!(bchd_multiply(&spec, &g, &spec.zero()).is_err());
}
