//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use nilflow_core::zoo::{self, ModelDescriptor};
use nilflow_core::{Check, ExtensionSpec, SpecParts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn mat_zero(n: usize) -> Mat {
    vec![vec![0.0; n]; n]
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut c = mat_zero(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// `exp(A)` for strictly upper-triangular `A`; the series stops at `A^{n-1}`.
pub fn nil_exp(a: &Mat) -> Mat {
    let n = a.len();
    let mut out = mat_zero(n);
    let mut term = mat_zero(n);
    for i in 0..n {
        out[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..n {
        term = mat_mul(&term, a);
        for i in 0..n {
            for j in 0..n {
                out[i][j] += term[i][j] / (1..=k).product::<usize>() as f64;
            }
        }
    }
    out
}

/// `log(U)` for unipotent upper-triangular `U`.
pub fn nil_log(u: &Mat) -> Mat {
    let n = u.len();
    let mut x = u.clone();
    for i in 0..n {
        x[i][i] -= 1.0;
    }
    let mut out = mat_zero(n);
    let mut term = x.clone();
    for k in 1..n {
        let s = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        for i in 0..n {
            for j in 0..n {
                out[i][j] += s * term[i][j];
            }
        }
        term = mat_mul(&term, &x);
    }
    out
}

/// `log(exp(A) exp(B))`.
pub fn matrix_bch(a: &Mat, b: &Mat) -> Mat {
    nil_log(&mat_mul(&nil_exp(a), &nil_exp(b)))
}

/// `E φ(X)` for `X ~ N(0, t I_dim)` by tensor Gauss–Hermite quadrature.
pub fn gaussian_expectation<F: Fn(&[f64]) -> f64>(dim: usize, t: f64, points: usize, f: F) -> f64 {
    let rule = GaussHermite::new(NonZeroUsize::new(points).unwrap());
    let pairs = rule.as_node_weight_pairs();
    let scale = (2.0 * t).sqrt();
    let norm = std::f64::consts::PI.powf(-(dim as f64) / 2.0);
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    loop {
        let mut w = norm;
        for (c, &i) in idx.iter().enumerate() {
            x[c] = scale * pairs[i].0;
            w *= pairs[i].1;
        }
        total += w * f(&x);
        let mut c = 0;
        loop {
            if c == dim {
                return total;
            }
            idx[c] += 1;
            if idx[c] < points {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}

/// Every zoo family at a desk-scale size.
pub fn zoo_models() -> Vec<ModelDescriptor> {
    vec![
        zoo::heisenberg(2, 1).unwrap(),
        zoo::heisenberg(4, 2).unwrap(),
        zoo::default_beta(3, 7).unwrap(),
        zoo::build_path_space_example(3).unwrap(),
        zoo::default_step2(2).unwrap(),
        zoo::default_step3(2).unwrap(),
        zoo::step3_karhunen_loeve(6).unwrap(),
    ]
}

pub fn abelian(m: usize, n: usize) -> ExtensionSpec {
    ExtensionSpec::from_parts(SpecParts::zeros(m, n, 1)).unwrap()
}

/// Specs each breaking one structural condition, paired with that check.
pub fn mutants() -> Vec<(Check, ExtensionSpec)> {
    let mut out = Vec::new();

    // ω(k1,k2) = e1 without the antisymmetric partner
    let mut p = SpecParts::zeros(2, 1, 2);
    let i = p.omega_idx(0, 1, 0);
    p.omega[i] = 1.0;
    out.push((Check::Skewness, p));

    // v = heis ⊕ ℝ, α e3 = e4 is not a derivation
    let mut p = SpecParts::zeros(1, 4, 3);
    p.set_vb_skew(0, 1, 2, 1.0);
    p.set_alpha(0, 2, 3, 1.0);
    out.push((Check::Leibniz, p));

    // α1 e1 = e2, α2 e2 = e3 do not commute while ω = 0
    let mut p = SpecParts::zeros(2, 3, 3);
    p.set_alpha(0, 0, 1, 1.0);
    p.set_alpha(1, 1, 2, 1.0);
    out.push((Check::C1, p));

    // ω(k1,k2) = e1, α3 e1 = e2: cyclic sum ≠ 0
    let mut p = SpecParts::zeros(3, 2, 3);
    p.set_omega_skew(0, 1, 0, 1.0);
    p.set_alpha(2, 0, 1, 1.0);
    out.push((Check::C2, p));

    // [e1,e2]=e3, [e2,e3]=e4, [e1,e4]=e5 on v alone
    let mut p = SpecParts::zeros(1, 5, 4);
    p.set_vb_skew(0, 1, 2, 1.0);
    p.set_vb_skew(1, 2, 3, 1.0);
    p.set_vb_skew(0, 3, 4, 1.0);
    out.push((Check::Jacobi, p));

    // Heisenberg declared with the wrong step
    let mut p = SpecParts::zeros(2, 1, 3);
    p.set_omega_skew(0, 1, 0, 1.0);
    out.push((Check::Step, p));

    out.into_iter()
        .map(|(c, p)| (c, ExtensionSpec::from_parts(p).unwrap()))
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
