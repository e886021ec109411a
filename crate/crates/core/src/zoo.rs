//! Builders for the standard example models, with closed-form group laws
//! where one is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{
    apply_equivalence, detect_step, validate_extension, Element, ExtensionSpec, SpecParts,
    STRUCTURAL_TOL,
};
use crate::error::{NilError, Result};

/// Closed-form product available for a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedFormLaw {
    /// `v = ℝ² ⊕ ℝ`, coordinates `(v1, v2, x)`.
    Step2R2R { omega: Vec<f64>, gamma: Vec<f64> },
    /// `v = ℝ³ ⊕ ℝ² ⊕ ℝ`, coordinates `(v1, v2, v3, x1, x2, y)`.
    Step3R6 { omega: Vec<f64>, gamma: Vec<f64> },
    /// Image in 4×4 strictly upper-triangular matrices; `beta` is `m × 3`
    /// and `v = (x, y, z)` sits at positions (1,3), (2,4), (1,4).
    UpperTriangular4 { beta: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub params: Value,
    pub spec: ExtensionSpec,
    pub oracle: Option<ClosedFormLaw>,
}

fn bilinear(mat: &[f64], m: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += a[i] * mat[i * m + j] * b[j];
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ClosedFormLaw {
    /// The product `g·h` evaluated from the closed form.
    pub fn multiply(&self, g: &Element, h: &Element) -> Element {
        let (w, u) = (g.w(), h.w());
        let m = w.len();
        let wsum: Vec<f64> = w.iter().zip(u).map(|(a, b)| a + b).collect();
        let (p, q) = (g.v(), h.v());
        match self {
            ClosedFormLaw::Step2R2R { omega, gamma } => {
                let om = bilinear(omega, m, w, u);
                let (gw, gu) = (dot(gamma, w), dot(gamma, u));
                let v = [
                    p[0] + q[0] + 0.5 * om,
                    p[1] + q[1] + 0.5 * om,
                    p[2] + q[2] + 0.5 * (gw * (q[0] - q[1]) - gu * (p[0] - p[1])),
                ];
                Element::from_parts(&wsum, &v)
            }
            ClosedFormLaw::Step3R6 { omega, gamma } => {
                let om = bilinear(omega, m, w, u);
                let (gw, gu) = (dot(gamma, w), dot(gamma, u));
                let a2 = |c: f64, v: &[f64]| [c * (v[0] - v[1]), c * (v[1] - v[2])];
                let a1 = |c: f64, x: &[f64]| c * (x[0] - x[1]);
                let lap = |v: &[f64]| v[0] - 2.0 * v[1] + v[2];
                let (awq, aup) = (a2(gw, q), a2(gu, p));
                let sum3 = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                let third = gw * gw * lap(q) + gu * gu * lap(p) - gw * gu * lap(&sum3);
                let v = [
                    p[0] + q[0] + 0.5 * om,
                    p[1] + q[1] + 0.5 * om,
                    p[2] + q[2] + 0.5 * om,
                    p[3] + q[3] + 0.5 * (awq[0] - aup[0]),
                    p[4] + q[4] + 0.5 * (awq[1] - aup[1]),
                    p[5] + q[5] + 0.5 * (a1(gw, &q[3..5]) - a1(gu, &p[3..5])) + third / 12.0,
                ];
                Element::from_parts(&wsum, &v)
            }
            ClosedFormLaw::UpperTriangular4 { beta } => {
                let a = upper_triangular_image(beta, g);
                let b = upper_triangular_image(beta, h);
                let prod = mat_mul(&nil_exp(&a), &nil_exp(&b));
                let l = nil_log(&prod);
                Element::from_parts(&wsum, &[l[0][2], l[1][3], l[0][3]])
            }
        }
    }
}

type Mat4 = [[f64; 4]; 4];

/// Image of `g` as a 4×4 strictly upper-triangular matrix.
pub fn upper_triangular_image(beta: &[f64], g: &Element) -> Mat4 {
    let w = g.w();
    let mut a = [[0.0; 4]; 4];
    for (i, wi) in w.iter().enumerate() {
        a[0][1] += wi * beta[3 * i];
        a[1][2] += wi * beta[3 * i + 1];
        a[2][3] += wi * beta[3 * i + 2];
    }
    let v = g.v();
    a[0][2] = v[0];
    a[1][3] = v[1];
    a[0][3] = v[2];
    a
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn nil_exp(a: &Mat4) -> Mat4 {
    let a2 = mat_mul(a, a);
    let a3 = mat_mul(&a2, a);
    let mut e = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            e[i][j] = if i == j { 1.0 } else { 0.0 } + a[i][j] + a2[i][j] / 2.0 + a3[i][j] / 6.0;
        }
    }
    e
}

fn nil_log(x: &Mat4) -> Mat4 {
    let mut n = *x;
    for (i, row) in n.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    let n2 = mat_mul(&n, &n);
    let n3 = mat_mul(&n2, &n);
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            l[i][j] = n[i][j] - n2[i][j] / 2.0 + n3[i][j] / 3.0;
        }
    }
    l
}

fn finish(
    name: &str,
    params: Value,
    mut parts: SpecParts,
    oracle: Option<ClosedFormLaw>,
) -> Result<ModelDescriptor> {
    parts.step = 1;
    let probe = ExtensionSpec::from_parts(parts)?;
    let step = detect_step(&probe)
        .ok_or_else(|| NilError::Validation(format!("{name}: algebra is not nilpotent")))?;
    let mut parts = probe.into_parts();
    parts.step = step;
    let spec = ExtensionSpec::from_parts(parts)?;
    let report = validate_extension(&spec, STRUCTURAL_TOL * 0.1);
    if !report.is_valid() {
        let names: Vec<&str> = report.failing().iter().map(|c| c.name()).collect();
        return Err(NilError::Validation(format!(
            "{name}: failing checks {}",
            names.join(", ")
        )));
    }
    Ok(ModelDescriptor {
        name: name.to_string(),
        params,
        spec,
        oracle,
    })
}

fn check_len(field: &'static str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(NilError::Shape {
            field,
            expected: format!("{len} entries"),
            found: format!("{} entries", v.len()),
        });
    }
    Ok(())
}

fn check_skew(field: &str, mat: &[f64], m: usize, block: usize) -> Result<()> {
    for i in 0..m {
        for j in 0..m {
            for k in 0..block {
                let a = mat[(i * m + j) * block + k];
                let b = mat[(j * m + i) * block + k];
                if (a + b).abs() > 1e-12 {
                    return Err(NilError::InvalidParameter(format!("{field} is not skew")));
                }
            }
        }
    }
    Ok(())
}

/// `α = 0`, `v = ℝ^N` abelian, with the given skew `ω` (`m × m × N`).
pub fn build_heisenberg_like(m: usize, n: usize, omega: &[f64]) -> Result<ModelDescriptor> {
    check_len("omega", omega, m * m * n)?;
    check_skew("omega", omega, m, n)?;
    let mut p = SpecParts::zeros(m, n, 1);
    p.omega = omega.to_vec();
    finish("heisenberg", json!({ "m": m, "N": n }), p, None)
}

/// Heisenberg-like model with `ω(k_{2i-1}, k_{2i}) = e_{i mod N}`; `m = 2`,
/// `N = 1` is the 3-dimensional Heisenberg algebra.
pub fn heisenberg(m: usize, n: usize) -> Result<ModelDescriptor> {
    if m < 2 || n == 0 {
        return Err(NilError::InvalidParameter(
            "heisenberg needs m ≥ 2, N ≥ 1".into(),
        ));
    }
    let mut p = SpecParts::zeros(m, n, 2);
    for i in 0..m / 2 {
        p.set_omega_skew(2 * i, 2 * i + 1, i % n, 1.0);
    }
    build_heisenberg_like(m, n, &p.omega)
}

/// Structure constants of strictly upper-triangular `n × n` matrices in
/// the basis `E_{ij}`, `i < j`, ordered lexicographically.
pub fn strictly_upper_triangular(n: usize) -> (usize, Vec<f64>) {
    let idx: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let dim = idx.len();
    let pos = |i: usize, j: usize| idx.iter().position(|&e| e == (i, j)).unwrap();
    let mut vb = vec![0.0; dim * dim * dim];
    for (a, &(i, j)) in idx.iter().enumerate() {
        for (b, &(k, l)) in idx.iter().enumerate() {
            // [E_ij, E_kl] = δ_jk E_il − δ_li E_kj
            if j == k {
                vb[(a * dim + b) * dim + pos(i, l)] += 1.0;
            }
            if l == i {
                vb[(a * dim + b) * dim + pos(k, j)] -= 1.0;
            }
        }
    }
    (dim, vb)
}

/// `α_X = ad_{β(X)}`, `ω(X,Y) = [β(X), β(Y)]` for a nilpotent `v` and a
/// linear `β : ℝ^m → v` given row-major (`m × N`).
pub fn build_beta_extension(
    m: usize,
    beta: &[f64],
    n: usize,
    v_bracket: &[f64],
) -> Result<ModelDescriptor> {
    check_len("beta", beta, m * n)?;
    check_len("v_bracket", v_bracket, n * n * n)?;
    let mut vp = SpecParts::zeros(0, n, 1);
    vp.v_bracket = v_bracket.to_vec();
    let vspec = ExtensionSpec::from_parts(vp)?;
    let vstep = detect_step(&vspec)
        .ok_or_else(|| NilError::InvalidParameter("v_bracket is not nilpotent".into()))?;
    let mut vp = vspec.into_parts();
    vp.step = vstep;
    let vreport = validate_extension(&ExtensionSpec::from_parts(vp)?, STRUCTURAL_TOL);
    if !vreport.is_valid() {
        let names: Vec<&str> = vreport.failing().iter().map(|c| c.name()).collect();
        return Err(NilError::InvalidParameter(format!(
            "v_bracket fails {}",
            names.join(", ")
        )));
    }
    let mut p = SpecParts::zeros(m, n, 1);
    p.v_bracket = v_bracket.to_vec();
    let vb = |a: usize, b: usize, k: usize| v_bracket[(a * n + b) * n + k];
    for i in 0..m {
        for j in 0..n {
            for k in 0..n {
                let s: f64 = (0..n).map(|a| beta[i * n + a] * vb(a, j, k)).sum();
                p.set_alpha(i, j, k, s);
            }
        }
        for j in 0..m {
            for k in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += beta[i * n + a] * beta[j * n + b] * vb(a, b, k);
                    }
                }
                let t = p.omega_idx(i, j, k);
                p.omega[t] = s;
            }
        }
    }
    finish("beta", json!({ "m": m, "N": n }), p, None)
}

/// Trapezoid weights `(K − j + ½)/K^{3/2}` of the time averages of the
/// piecewise-linear basis paths, `j = 1..K`.
fn path_averages(k: usize) -> Vec<f64> {
    let kf = k as f64;
    (1..=k)
        .map(|j| (kf - j as f64 + 0.5) / kf.powf(1.5))
        .collect()
}

/// Path space `W(ℝ³)` on `K` grid intervals with `v = ℝ³`, corresponding
/// to 4×4 strictly upper-triangular matrices through the time average.
///
/// The `W` basis is indexed `3(j−1) + c` for interval `j` and component `c`;
/// each basis path has constant derivative `√K` on its interval.
pub fn build_path_space_example(k: usize) -> Result<ModelDescriptor> {
    if k < 2 {
        return Err(NilError::InvalidParameter("path space needs K ≥ 2".into()));
    }
    let m = 3 * k;
    let avg = path_averages(k);
    let mut beta = vec![0.0; m * 3];
    for j in 0..k {
        for c in 0..3 {
            beta[(3 * j + c) * 3 + c] = avg[j];
        }
    }
    let mut p = SpecParts::zeros(m, 3, 1);
    for i in 0..m {
        let si = &beta[3 * i..3 * i + 3];
        for j in 0..m {
            let tj = &beta[3 * j..3 * j + 3];
            let t0 = p.omega_idx(i, j, 0);
            p.omega[t0] = si[0] * tj[1] - tj[0] * si[1];
            let t1 = p.omega_idx(i, j, 1);
            p.omega[t1] = si[1] * tj[2] - tj[1] * si[2];
        }
        // α_σ(x, y, z) = (0, 0, σ̄₁ y − σ̄₃ x)
        p.set_alpha(i, 1, 2, si[0]);
        p.set_alpha(i, 0, 2, -si[2]);
    }
    finish(
        "pathspace",
        json!({ "K": k }),
        p,
        Some(ClosedFormLaw::UpperTriangular4 { beta }),
    )
}

/// Default coupling forms on `ℝ³` used by the step-2 and step-3 models.
pub fn default_phi_rho() -> ([f64; 9], [f64; 3]) {
    let phi = [0.0, 1.0, 0.0, -1.0, 0.0, 0.5, 0.0, -0.5, 0.0];
    (phi, [1.0, -0.5, 0.25])
}

/// `Ω(σ,τ) = ∫ φ(σ(s), τ(s)) ds` and `γ(σ) = ∫ ρ(σ(s)) ds` on the path basis
/// of [`build_path_space_example`], with the trapezoid rule on the grid.
pub fn path_space_couplings(
    k: usize,
    phi: &[f64; 9],
    rho: &[f64; 3],
) -> (usize, Vec<f64>, Vec<f64>) {
    let m = 3 * k;
    let kf = k as f64;
    let avg = path_averages(k);
    let mut omega = vec![0.0; m * m];
    let mut gamma = vec![0.0; m];
    for j in 0..k {
        for c in 0..3 {
            let a = 3 * j + c;
            gamma[a] = rho[c] * avg[j];
            for l in 0..k {
                let overlap = (kf - (j.max(l) + 1) as f64 + 0.5) / (kf * kf);
                for d in 0..3 {
                    omega[a * m + 3 * l + d] = phi[3 * c + d] * overlap;
                }
            }
        }
    }
    (m, omega, gamma)
}

fn check_coupling(m: usize, omega: &[f64], gamma: &[f64]) -> Result<()> {
    check_len("Omega", omega, m * m)?;
    check_len("gamma", gamma, m)?;
    check_skew("Omega", omega, m, 1)
}

/// Step-2 model on `v = ℝ² ⊕ ℝ`: `ω = (Ω, Ω, 0)`, `α_w v = γ(w)(v1 − v2)`.
pub fn build_step2_r2r(m: usize, omega: &[f64], gamma: &[f64]) -> Result<ModelDescriptor> {
    check_coupling(m, omega, gamma)?;
    let mut p = SpecParts::zeros(m, 3, 1);
    for i in 0..m {
        for j in 0..m {
            for k in 0..2 {
                let t = p.omega_idx(i, j, k);
                p.omega[t] = omega[i * m + j];
            }
        }
        p.set_alpha(i, 0, 2, gamma[i]);
        p.set_alpha(i, 1, 2, -gamma[i]);
    }
    finish(
        "step2",
        json!({ "m": m }),
        p,
        Some(ClosedFormLaw::Step2R2R {
            omega: omega.to_vec(),
            gamma: gamma.to_vec(),
        }),
    )
}

/// Step-3 model on `v = ℝ³ ⊕ ℝ² ⊕ ℝ`: `ω = (Ω, Ω, Ω, 0, 0, 0)` and
/// `α_w(v, x, y) = (0, γ(w)(v1 − v2, v2 − v3), γ(w)(x1 − x2))`.
pub fn build_step3_r6(m: usize, omega: &[f64], gamma: &[f64]) -> Result<ModelDescriptor> {
    check_coupling(m, omega, gamma)?;
    let mut p = SpecParts::zeros(m, 6, 1);
    for i in 0..m {
        for j in 0..m {
            for k in 0..3 {
                let t = p.omega_idx(i, j, k);
                p.omega[t] = omega[i * m + j];
            }
        }
        let g = gamma[i];
        p.set_alpha(i, 0, 3, g);
        p.set_alpha(i, 1, 3, -g);
        p.set_alpha(i, 1, 4, g);
        p.set_alpha(i, 2, 4, -g);
        p.set_alpha(i, 3, 5, g);
        p.set_alpha(i, 4, 5, -g);
    }
    finish(
        "step3",
        json!({ "m": m }),
        p,
        Some(ClosedFormLaw::Step3R6 {
            omega: omega.to_vec(),
            gamma: gamma.to_vec(),
        }),
    )
}

/// Couplings for scalar paths in the Karhunen–Loève basis
/// `e_i(s) = √2 sin(λ_i s)/λ_i`, `λ_i = (i − ½)π`: `γ(σ) = ∫σ` and
/// `Ω(σ,τ) = σ̄ τ(1) − τ̄ σ(1)`. Returns `(Ω, γ)` for the first `m` modes.
pub fn karhunen_loeve_couplings(m: usize) -> (Vec<f64>, Vec<f64>) {
    let lam = |i: usize| (i as f64 + 0.5) * std::f64::consts::PI;
    let avg: Vec<f64> = (0..m)
        .map(|i| std::f64::consts::SQRT_2 / lam(i).powi(2))
        .collect();
    let end: Vec<f64> = (0..m)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * std::f64::consts::SQRT_2 / lam(i)
        })
        .collect();
    let mut omega = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            omega[i * m + j] = avg[i] * end[j] - avg[j] * end[i];
        }
    }
    (omega, avg)
}

/// Step-3 model with Karhunen–Loève couplings on `m` modes.
pub fn step3_karhunen_loeve(m: usize) -> Result<ModelDescriptor> {
    if m < 2 {
        return Err(NilError::InvalidParameter("need m ≥ 2 modes".into()));
    }
    let (om, ga) = karhunen_loeve_couplings(m);
    let mut d = build_step3_r6(m, &om, &ga)?;
    d.name = "step3kl".into();
    d.params = json!({ "m": m });
    Ok(d)
}

/// Step-2 model with path-space couplings on `K` intervals.
pub fn default_step2(k: usize) -> Result<ModelDescriptor> {
    let (phi, rho) = default_phi_rho();
    let (m, om, ga) = path_space_couplings(k, &phi, &rho);
    let mut d = build_step2_r2r(m, &om, &ga)?;
    d.params = json!({ "m": m, "K": k });
    Ok(d)
}

/// Step-3 model with path-space couplings on `K` intervals.
pub fn default_step3(k: usize) -> Result<ModelDescriptor> {
    let (phi, rho) = default_phi_rho();
    let (m, om, ga) = path_space_couplings(k, &phi, &rho);
    let mut d = build_step3_r6(m, &om, &ga)?;
    d.params = json!({ "m": m, "K": k });
    Ok(d)
}

/// `β`-extension of the 4×4 strictly upper-triangular algebra with a
/// random `β` drawn from `seed`.
pub fn default_beta(m: usize, seed: u64) -> Result<ModelDescriptor> {
    let (n, vb) = strictly_upper_triangular(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut d = build_beta_extension(m, &beta, n, &vb)?;
    d.params = json!({ "m": m, "seed": seed });
    Ok(d)
}

/// A random valid spec from one of the model families, followed by a
/// random equivalence transformation.
pub fn random_model(seed: u64) -> Result<ModelDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = rng.gen_range(0..4);
    let mut d = match family {
        0 => {
            let m = rng.gen_range(2..6);
            let n = rng.gen_range(1..4);
            let mut p = SpecParts::zeros(m, n, 2);
            for i in 0..m {
                for j in i + 1..m {
                    for k in 0..n {
                        p.set_omega_skew(i, j, k, rng.gen_range(-1.0..1.0));
                    }
                }
            }
            build_heisenberg_like(m, n, &p.omega)?
        }
        1 => {
            let size = rng.gen_range(3..5);
            let (n, vb) = strictly_upper_triangular(size);
            let m = rng.gen_range(1..4);
            let beta: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            build_beta_extension(m, &beta, n, &vb)?
        }
        _ => {
            let m = rng.gen_range(2..5);
            let mut om = vec![0.0; m * m];
            for i in 0..m {
                for j in i + 1..m {
                    let x = rng.gen_range(-1.0..1.0);
                    om[i * m + j] = x;
                    om[j * m + i] = -x;
                }
            }
            let ga: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if family == 2 {
                build_step2_r2r(m, &om, &ga)?
            } else {
                build_step3_r6(m, &om, &ga)?
            }
        }
    };
    let (m, n) = (d.spec.m(), d.spec.n());
    let b: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    d.spec = apply_equivalence(&d.spec, &b)?.0;
    d.name = format!("random-{}", d.name);
    d.oracle = None;
    d.params = json!({ "seed": seed });
    Ok(d)
}

/// Builds a model by name with default parameters.
pub fn build_by_name(name: &str, size: usize, seed: u64) -> Result<ModelDescriptor> {
    match name {
        "heisenberg" => heisenberg(size.max(2), 1),
        "beta" => default_beta(size.max(1), seed),
        "pathspace" => build_path_space_example(size.max(2)),
        "step2" => default_step2(size.max(1)),
        "step3" => default_step3(size.max(1)),
        "step3kl" => step3_karhunen_loeve(size.max(2)),
        other => Err(NilError::InvalidParameter(format!(
            "unknown model `{other}`"
        ))),
    }
}
