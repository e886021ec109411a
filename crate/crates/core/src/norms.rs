//! Hilbert–Schmidt and uniform norms of the structure maps, and the
//! inequalities relating them.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::algebra::ExtensionSpec;
use crate::error::{NilError, Result};

/// Default number of random restarts for the uniform-norm estimator.
pub const DEFAULT_RESTARTS: usize = 32;
/// Default slack applied to uniform-norm lower bounds.
pub const DEFAULT_SLACK: f64 = 1.05;

/// A bilinear map `ℝ^a × ℝ^b → ℝ^c` stored as `data[(i*b + j)*c + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearMap {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl BilinearMap {
    pub fn new(a: usize, b: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != a * b * c {
            return Err(NilError::Shape {
                field: "bilinear map",
                expected: format!("{a}x{b}x{c}"),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(BilinearMap { a, b, c, data })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.c];
        for i in 0..self.a {
            for j in 0..self.b {
                let s = x[i] * y[j];
                if s == 0.0 {
                    continue;
                }
                let blk = &self.data[(i * self.b + j) * self.c..(i * self.b + j + 1) * self.c];
                for (o, v) in out.iter_mut().zip(blk) {
                    *o += s * v;
                }
            }
        }
        out
    }

    /// Matrix of `x ↦ B(x, y)` (`c × a`).
    fn fix_second(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.c, self.a, |k, i| {
            (0..self.b)
                .map(|j| y[j] * self.data[(i * self.b + j) * self.c + k])
                .sum()
        })
    }

    /// Matrix of `y ↦ B(x, y)` (`c × b`).
    fn fix_first(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.c, self.b, |k, j| {
            (0..self.a)
                .map(|i| x[i] * self.data[(i * self.b + j) * self.c + k])
                .sum()
        })
    }
}

/// Which structure map a uniform-norm estimate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMap {
    Omega,
    Alpha,
    Bracket,
    VBracket,
}

/// The requested structure map as a dense bilinear map.
pub fn structure_map(spec: &ExtensionSpec, which: StructureMap) -> BilinearMap {
    let p = spec.parts();
    match which {
        StructureMap::Omega => BilinearMap::new(p.m, p.m, p.n, p.omega.clone()),
        StructureMap::Alpha => BilinearMap::new(p.m, p.n, p.n, p.alpha.clone()),
        StructureMap::VBracket => BilinearMap::new(p.n, p.n, p.n, p.v_bracket.clone()),
        StructureMap::Bracket => {
            BilinearMap::new(spec.dim(), spec.dim(), p.n, spec.structure().to_vec())
        }
    }
    .expect("spec tensors have consistent shapes")
}

/// Hilbert–Schmidt norm: square root of the sum of squared coefficients
/// in orthonormal bases.
pub fn hs_norm(map: &BilinearMap) -> f64 {
    map.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit_random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-12 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

fn top_right_singular(mat: &DMatrix<f64>) -> (f64, Vec<f64>) {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return (0.0, vec![0.0; mat.ncols()]);
    }
    // eigen-decomposition of the small Gram matrix
    let gram = mat.transpose() * mat;
    let eig = gram.symmetric_eigen();
    let (idx, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let v: DVector<f64> = eig.eigenvectors.column(idx).into();
    (lam.max(0.0).sqrt(), v.iter().copied().collect())
}

/// Lower bound on `sup ‖B(x,y)‖` over unit `x, y` by alternating
/// maximization from `restarts` random starts. The value is attained at
/// explicit unit vectors, so it never exceeds the true operator norm, and it
/// is nondecreasing in `restarts`.
pub fn uniform_norm_estimate(map: &BilinearMap, restarts: usize, seed: u64) -> f64 {
    if map.a == 0 || map.b == 0 || map.c == 0 {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut y = unit_random(&mut rng, map.b);
        let mut val: f64 = 0.0;
        for _ in 0..200 {
            let (_, x) = top_right_singular(&map.fix_second(&y));
            let (s, ynew) = top_right_singular(&map.fix_first(&x));
            y = ynew;
            let done = s - val <= 1e-15 * s.max(1.0);
            val = val.max(s);
            if done {
                break;
            }
        }
        best = best.max(val);
    }
    best
}

/// `E‖Z‖^p` for a standard Gaussian `Z` in `ℝ^m`.
pub fn gaussian_moment(m: usize, p: f64) -> f64 {
    let m = m as f64;
    (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (m + p)) - ln_gamma(0.5 * m)).exp()
}

/// Squared HS norms of the left-nested bracket maps `F_ℓ : g^{⊗ℓ} → v`
/// for `ℓ = 2..=max_level`, via the Gram recursion
/// `G_{ℓ+1} = Σ_j A_j G_ℓ A_jᵀ` with `A_j u = [u, h_j]`.
pub fn nested_bracket_hs_sq(spec: &ExtensionSpec, max_level: usize) -> Vec<f64> {
    let (m, n, d) = (spec.m(), spec.n(), spec.dim());
    let c = spec.structure();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for ab in 0..d * d {
        let v = DVector::from_column_slice(&c[ab * n..(ab + 1) * n]);
        g += &v * v.transpose();
    }
    let a_mats: Vec<DMatrix<f64>> = (0..d)
        .map(|j| DMatrix::from_fn(n, n, |k, q| c[((m + q) * d + j) * n + k]))
        .collect();
    let mut out = Vec::new();
    for _ in 2..=max_level {
        out.push(g.trace());
        let mut next = DMatrix::<f64>::zeros(n, n);
        for a in &a_mats {
            next += a * &g * a.transpose();
        }
        g = next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

impl InequalityCheck {
    fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let passed = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
        InequalityCheck {
            name: name.into(),
            lhs,
            rhs,
            passed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformEstimates {
    pub omega: f64,
    pub alpha: f64,
    pub bracket: f64,
    /// Estimated uniform norm of `[·,·]_v`.
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub hs_bracket: f64,
    pub hs_omega: f64,
    pub hs_alpha: f64,
    pub hs_v_bracket: f64,
    pub uniform: UniformEstimates,
    /// `E‖Z‖²` for a standard Gaussian on `W`, i.e. `m`.
    pub c2: f64,
    pub restarts: usize,
    pub slack: f64,
    /// `‖F_ℓ‖₂²` for `ℓ = 2..=step+1`.
    pub nested_hs_sq: Vec<f64>,
    pub inequalities: Vec<InequalityCheck>,
}

impl NormReport {
    pub fn all_pass(&self) -> bool {
        self.inequalities.iter().all(|c| c.passed)
    }
}

/// Computes every norm and checks the inequalities between them.
/// Uniform norms are lower-bound estimates; where they sit on the larger
/// side of an inequality they are inflated by `slack`.
pub fn check_norm_inequalities(spec: &ExtensionSpec, restarts: usize, slack: f64) -> NormReport {
    let maps = [
        StructureMap::Omega,
        StructureMap::Alpha,
        StructureMap::Bracket,
        StructureMap::VBracket,
    ]
    .map(|w| structure_map(spec, w));
    let hs = maps.clone().map(|m| hs_norm(&m));
    let est = maps.map(|m| uniform_norm_estimate(&m, restarts, 0x6e69_6c66));
    let uniform = UniformEstimates {
        omega: est[0],
        alpha: est[1],
        bracket: est[2],
        c0: est[3],
    };
    let n = spec.n() as f64;
    let c2 = gaussian_moment(spec.m(), 2.0);
    let mut ineq = vec![
        InequalityCheck::le(
            "alpha_hs_le_uniform",
            hs[1] * hs[1],
            n * c2 * (slack * uniform.alpha).powi(2),
        ),
        InequalityCheck::le(
            "omega_hs_le_uniform",
            hs[0] * hs[0],
            c2 * c2 * (slack * uniform.omega).powi(2),
        ),
        InequalityCheck::le(
            "bracket_uniform_le_parts",
            uniform.bracket,
            slack * (uniform.omega + 2.0 * uniform.alpha + uniform.c0),
        ),
    ];
    let parts = hs[0] * hs[0] + 2.0 * hs[1] * hs[1] + hs[3] * hs[3];
    let total = hs[2] * hs[2];
    ineq.push(InequalityCheck {
        name: "bracket_hs_decomposition".into(),
        lhs: total,
        rhs: parts,
        passed: (total - parts).abs() <= 1e-9 * parts.max(1.0),
    });
    let nested = nested_bracket_hs_sq(spec, spec.step() + 1);
    for (i, w) in nested.windows(2).enumerate() {
        ineq.push(InequalityCheck::le(
            format!("nested_recursion_{}", i + 2),
            w[1],
            n * total * w[0],
        ));
    }
    NormReport {
        hs_bracket: hs[2],
        hs_omega: hs[0],
        hs_alpha: hs[1],
        hs_v_bracket: hs[3],
        uniform,
        c2,
        restarts,
        slack,
        nested_hs_sq: nested,
        inequalities: ineq,
    }
}
