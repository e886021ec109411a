//! Extension algebras `g = W ⊕ v` described by a triple `(ω, α, [·,·]_v)`.
//!
//! Coordinates of an element are laid out as the `m` coordinates of `W`
//! followed by the `N` coordinates of `v`. The bracket is
//!
//! ```text
//! [(X1,V1),(X2,V2)] = (0, ω(X1,X2) + α_{X1} V2 − α_{X2} V1 + [V1,V2]_v)
//! ```
//!
//! and always lands in `v`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NilError, Result};

/// Default absolute tolerance for structural checks.
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// Singular-value cutoff used when computing spans in the lower central series.
pub const SPAN_CUTOFF: f64 = 1e-10;

/// Flat storage of the three structure tensors.
///
/// * `omega[(i*m + j)*N + k]` is the `k`-th component of `ω(k_i, k_j)`.
/// * `alpha[(i*N + j)*N + k]` is the `k`-th component of `α_{k_i} e_j`.
/// * `v_bracket[(i*N + j)*N + k]` is the `k`-th component of `[e_i, e_j]_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecParts {
    pub m: usize,
    pub n: usize,
    pub step: usize,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub v_bracket: Vec<f64>,
}

impl SpecParts {
    /// All-zero tensors of the right shapes.
    pub fn zeros(m: usize, n: usize, step: usize) -> Self {
        SpecParts {
            m,
            n,
            step,
            omega: vec![0.0; m * m * n],
            alpha: vec![0.0; m * n * n],
            v_bracket: vec![0.0; n * n * n],
        }
    }

    pub fn omega_idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.m + j) * self.n + k
    }

    pub fn alpha_idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn vb_idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Sets `ω(k_i,k_j)_k = x` and `ω(k_j,k_i)_k = -x`.
    pub fn set_omega_skew(&mut self, i: usize, j: usize, k: usize, x: f64) {
        let a = self.omega_idx(i, j, k);
        let b = self.omega_idx(j, i, k);
        self.omega[a] = x;
        self.omega[b] = -x;
    }

    /// Sets `[e_i,e_j]_k = x` and `[e_j,e_i]_k = -x`.
    pub fn set_vb_skew(&mut self, i: usize, j: usize, k: usize, x: f64) {
        let a = self.vb_idx(i, j, k);
        let b = self.vb_idx(j, i, k);
        self.v_bracket[a] = x;
        self.v_bracket[b] = -x;
    }

    pub fn set_alpha(&mut self, i: usize, j: usize, k: usize, x: f64) {
        let a = self.alpha_idx(i, j, k);
        self.alpha[a] = x;
    }
}

/// Nested-array form used for JSON.
#[derive(Serialize, Deserialize)]
struct RawSpec {
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    step: usize,
    omega: Vec<Vec<Vec<f64>>>,
    alpha: Vec<Vec<Vec<f64>>>,
    v_bracket: Vec<Vec<Vec<f64>>>,
}

fn flatten3(
    field: &'static str,
    data: &[Vec<Vec<f64>>],
    d0: usize,
    d1: usize,
    d2: usize,
) -> Result<Vec<f64>> {
    let shape_err = |found: String| NilError::Shape {
        field,
        expected: format!("{d0}x{d1}x{d2}"),
        found,
    };
    if data.len() != d0 {
        return Err(shape_err(format!("{} outer entries", data.len())));
    }
    let mut out = Vec::with_capacity(d0 * d1 * d2);
    for (i, row) in data.iter().enumerate() {
        if row.len() != d1 {
            return Err(shape_err(format!("{} entries at [{i}]", row.len())));
        }
        for (j, col) in row.iter().enumerate() {
            if col.len() != d2 {
                return Err(shape_err(format!("{} entries at [{i}][{j}]", col.len())));
            }
            out.extend_from_slice(col);
        }
    }
    Ok(out)
}

fn nest3(data: &[f64], d0: usize, d1: usize, d2: usize) -> Vec<Vec<Vec<f64>>> {
    (0..d0)
        .map(|i| {
            (0..d1)
                .map(|j| data[(i * d1 + j) * d2..(i * d1 + j + 1) * d2].to_vec())
                .collect()
        })
        .collect()
}

/// A finite-dimensional extension `g = ℝ^m ⊕ v` with declared nilpotency step.
///
/// Construction checks shapes and finiteness only; the algebraic conditions
/// are checked by [`validate_extension`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ExtensionSpec {
    parts: SpecParts,
    /// Assembled structure constants `c[(a*D + b)*N + k]` of the full bracket.
    structure: Vec<f64>,
    /// `true` where the block `c[a][b][..]` has a nonzero entry.
    nonzero: Vec<bool>,
}

impl PartialEq for ExtensionSpec {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl TryFrom<RawSpec> for ExtensionSpec {
    type Error = NilError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let (m, n) = (raw.m, raw.n);
        let parts = SpecParts {
            m,
            n,
            step: raw.step,
            omega: flatten3("omega", &raw.omega, m, m, n)?,
            alpha: flatten3("alpha", &raw.alpha, m, n, n)?,
            v_bracket: flatten3("v_bracket", &raw.v_bracket, n, n, n)?,
        };
        ExtensionSpec::from_parts(parts)
    }
}

impl From<ExtensionSpec> for RawSpec {
    fn from(s: ExtensionSpec) -> Self {
        let p = s.parts;
        RawSpec {
            m: p.m,
            n: p.n,
            step: p.step,
            omega: nest3(&p.omega, p.m, p.m, p.n),
            alpha: nest3(&p.alpha, p.m, p.n, p.n),
            v_bracket: nest3(&p.v_bracket, p.n, p.n, p.n),
        }
    }
}

impl ExtensionSpec {
    pub fn from_parts(parts: SpecParts) -> Result<Self> {
        let SpecParts { m, n, step, .. } = parts;
        if n == 0 {
            return Err(NilError::InvalidParameter("N must be positive".into()));
        }
        if step == 0 {
            return Err(NilError::InvalidParameter("step must be positive".into()));
        }
        let check = |field: &'static str, v: &[f64], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(NilError::Shape {
                    field,
                    expected: format!("{len} entries"),
                    found: format!("{} entries", v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NilError::NonFinite(field));
            }
            Ok(())
        };
        check("omega", &parts.omega, m * m * n)?;
        check("alpha", &parts.alpha, m * n * n)?;
        check("v_bracket", &parts.v_bracket, n * n * n)?;

        let d = m + n;
        let mut c = vec![0.0; d * d * n];
        for i in 0..m {
            for j in 0..m {
                for k in 0..n {
                    c[(i * d + j) * n + k] = parts.omega[parts.omega_idx(i, j, k)];
                }
            }
            for j in 0..n {
                for k in 0..n {
                    let a = parts.alpha[parts.alpha_idx(i, j, k)];
                    c[(i * d + m + j) * n + k] = a;
                    c[((m + j) * d + i) * n + k] = -a;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    c[((m + i) * d + m + j) * n + k] = parts.v_bracket[parts.vb_idx(i, j, k)];
                }
            }
        }
        let nonzero = c
            .chunks(n)
            .map(|blk| blk.iter().any(|&x| x != 0.0))
            .collect();
        Ok(ExtensionSpec {
            parts,
            structure: c,
            nonzero,
        })
    }

    pub fn parts(&self) -> &SpecParts {
        &self.parts
    }

    pub fn into_parts(self) -> SpecParts {
        self.parts
    }

    pub fn m(&self) -> usize {
        self.parts.m
    }

    pub fn n(&self) -> usize {
        self.parts.n
    }

    pub fn step(&self) -> usize {
        self.parts.step
    }

    /// Total dimension `m + N`.
    pub fn dim(&self) -> usize {
        self.parts.m + self.parts.n
    }

    /// Structure constants of the full bracket, `c[(a*D + b)*N + k]`.
    pub fn structure(&self) -> &[f64] {
        &self.structure
    }

    pub fn zero(&self) -> Element {
        Element::zeros(self.m(), self.n())
    }

    /// The `a`-th orthonormal basis vector of `g` (W directions first).
    pub fn basis(&self, a: usize) -> Element {
        let mut e = self.zero();
        e.coords[a] = 1.0;
        e
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash_hex(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Restriction to the first `ell` directions of `W`.
    pub fn truncate(&self, ell: usize) -> Result<ExtensionSpec> {
        let p = &self.parts;
        if ell > p.m {
            return Err(NilError::InvalidParameter(format!(
                "truncation {ell} exceeds m = {}",
                p.m
            )));
        }
        let mut q = SpecParts::zeros(ell, p.n, p.step);
        for i in 0..ell {
            for j in 0..ell {
                for k in 0..p.n {
                    let t = q.omega_idx(i, j, k);
                    q.omega[t] = p.omega[p.omega_idx(i, j, k)];
                }
            }
        }
        q.alpha.copy_from_slice(&p.alpha[..ell * p.n * p.n]);
        q.v_bracket.clone_from(&p.v_bracket);
        let spec = ExtensionSpec::from_parts(q)?;
        // a truncation can have lower step than the parent
        match detect_step(&spec) {
            Some(s) if s != spec.step() => {
                let mut q = spec.into_parts();
                q.step = s;
                ExtensionSpec::from_parts(q)
            }
            _ => Ok(spec),
        }
    }

    /// Embeds an element of `truncate(ell)` back into `g` by zero padding.
    pub fn embed_truncated(&self, x: &Element) -> Element {
        let mut out = self.zero();
        let ell = x.m();
        out.coords[..ell].copy_from_slice(x.w());
        out.coords[self.m()..].copy_from_slice(x.v());
        out
    }

    /// Writes the `v`-part of `[x, y]` into `out` (length `N`), accumulating.
    pub(crate) fn bracket_acc(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.dim();
        let n = self.n();
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let row = a * d;
            for (b, &yb) in y.iter().enumerate() {
                if yb == 0.0 || !self.nonzero[row + b] {
                    continue;
                }
                let s = scale * xa * yb;
                let blk = &self.structure[(row + b) * n..(row + b + 1) * n];
                for (o, c) in out.iter_mut().zip(blk) {
                    *o += s * c;
                }
            }
        }
    }

    /// Accumulates `scale · [x, (0, yv)]` into `out` for `yv ∈ v`.
    pub(crate) fn bracket_acc_v(&self, x: &[f64], yv: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.dim();
        let (m, n) = (self.m(), self.n());
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let row = a * d + m;
            for (b, &yb) in yv.iter().enumerate() {
                if yb == 0.0 || !self.nonzero[row + b] {
                    continue;
                }
                let s = scale * xa * yb;
                let blk = &self.structure[(row + b) * n..(row + b + 1) * n];
                for (o, c) in out.iter_mut().zip(blk) {
                    *o += s * c;
                }
            }
        }
    }

    /// `[x, y]` on raw coordinate slices; returns full coordinates.
    pub(crate) fn bracket_raw(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let m = self.m();
        self.bracket_acc(x, y, 1.0, &mut out[m..]);
        out
    }

    /// The Lie bracket of two elements.
    pub fn bracket(&self, x: &Element, y: &Element) -> Result<Element> {
        self.check_element(x)?;
        self.check_element(y)?;
        Ok(self.bracket_unchecked(x, y))
    }

    pub(crate) fn bracket_unchecked(&self, x: &Element, y: &Element) -> Element {
        Element {
            m: self.m(),
            coords: self.bracket_raw(&x.coords, &y.coords),
        }
    }

    pub fn check_element(&self, x: &Element) -> Result<()> {
        if x.m != self.m() || x.coords.len() != self.dim() {
            return Err(NilError::Dimension {
                expected: self.dim(),
                found: x.coords.len(),
            });
        }
        Ok(())
    }

    /// Left-nested bracket `[[k_{σ(1)}, k_{σ(2)}], …, k_{σ(n)}]`.
    pub fn nested_bracket(&self, sigma: &Permutation, ks: &[Element]) -> Result<Element> {
        if sigma.len() != ks.len() || ks.is_empty() {
            return Err(NilError::InvalidParameter(format!(
                "permutation of length {} applied to {} elements",
                sigma.len(),
                ks.len()
            )));
        }
        for k in ks {
            self.check_element(k)?;
        }
        let img = sigma.images();
        let mut acc = ks[img[0]].clone();
        for &i in &img[1..] {
            acc = self.bracket_unchecked(&acc, &ks[i]);
        }
        Ok(acc)
    }

    /// `ω(x, y)` for `x, y ∈ W`, as an `N`-vector.
    pub fn omega_apply(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let p = &self.parts;
        let mut out = vec![0.0; p.n];
        for i in 0..p.m {
            for j in 0..p.m {
                let s = x[i] * y[j];
                if s == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += s * p.omega[p.omega_idx(i, j, k)];
                }
            }
        }
        out
    }

    /// `α_x v` for `x ∈ W`, `v ∈ v`.
    pub fn alpha_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let p = &self.parts;
        let mut out = vec![0.0; p.n];
        for i in 0..p.m {
            for j in 0..p.n {
                let s = x[i] * v[j];
                if s == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += s * p.alpha[p.alpha_idx(i, j, k)];
                }
            }
        }
        out
    }

    /// `[u, v]_v` for `u, v ∈ v`.
    pub fn vb_apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let p = &self.parts;
        let mut out = vec![0.0; p.n];
        for i in 0..p.n {
            for j in 0..p.n {
                let s = u[i] * v[j];
                if s == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += s * p.v_bracket[p.vb_idx(i, j, k)];
                }
            }
        }
        out
    }
}

/// An element of `g`, stored as `W` coordinates followed by `v` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    m: usize,
    coords: Vec<f64>,
}

impl Element {
    pub fn zeros(m: usize, n: usize) -> Self {
        Element {
            m,
            coords: vec![0.0; m + n],
        }
    }

    pub fn from_parts(w: &[f64], v: &[f64]) -> Self {
        let mut coords = w.to_vec();
        coords.extend_from_slice(v);
        Element { m: w.len(), coords }
    }

    pub fn from_coords(m: usize, coords: Vec<f64>) -> Result<Self> {
        if m > coords.len() {
            return Err(NilError::Dimension {
                expected: m,
                found: coords.len(),
            });
        }
        Ok(Element { m, coords })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn w(&self) -> &[f64] {
        &self.coords[..self.m]
    }

    pub fn v(&self) -> &[f64] {
        &self.coords[self.m..]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Euclidean (Cameron–Martin) norm.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum()
    }

    pub fn scale(&self, s: f64) -> Element {
        Element {
            m: self.m,
            coords: self.coords.iter().map(|x| s * x).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Element) {
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a += s * b;
        }
    }

    pub fn dist(&self, other: &Element) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Element) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Add for &Element {
    type Output = Element;
    fn add(self, rhs: &Element) -> Element {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl std::ops::Sub for &Element {
    type Output = Element;
    fn sub(self, rhs: &Element) -> Element {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl std::ops::Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        self.scale(-1.0)
    }
}

/// A permutation of `{0, …, n-1}` in one-line notation: `σ(i) = images[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || seen[i] {
                return Err(NilError::InvalidParameter(format!(
                    "{images:?} is not a permutation"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation(images))
    }

    /// Builds from 1-based one-line notation, e.g. `[2, 3, 1]`.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return Err(NilError::InvalidParameter("1-based images expected".into()));
        }
        Permutation::new(images.iter().map(|i| i - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            inv[s] = i;
        }
        Permutation(inv)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&i| self.0[i]).collect())
    }

    /// Number of descents, `#{i : σ(i) > σ(i+1)}`.
    pub fn descents(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] > w[1]).count()
    }

    /// All permutations of `n` letters in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Permutation(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1))
                .rev()
                .find(|&i| cur[i] < cur[i + 1])
            else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
            cur.swap(i, j);
            cur[i + 1..].reverse();
        }
        out
    }
}

/// Names of the structural checks performed by [`validate_extension`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Skewness,
    Leibniz,
    C1,
    C2,
    Jacobi,
    Step,
    SemiInfiniteRange,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Skewness => "skewness",
            Check::Leibniz => "leibniz",
            Check::C1 => "c1",
            Check::C2 => "c2",
            Check::Jacobi => "jacobi",
            Check::Step => "step",
            Check::SemiInfiniteRange => "semi_infinite_range",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Check::Skewness => "omega and v_bracket are antisymmetric",
            Check::Leibniz => "each alpha_X is a derivation of v",
            Check::C1 => "[alpha_X, alpha_Y] = ad_{omega(X,Y)}",
            Check::C2 => "cyclic sum of alpha_X omega(Y,Z) vanishes",
            Check::Jacobi => "Jacobi identity on the assembled bracket",
            Check::Step => "lower central series terminates at the declared step",
            Check::SemiInfiniteRange => "brackets have zero W-part",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    /// Largest absolute residual over basis elements (0 for the step check).
    pub max_residual: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub declared_step: usize,
    /// `None` when the lower central series does not terminate.
    pub detected_step: Option<usize>,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<Check> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.check)
            .collect()
    }

    pub fn get(&self, check: Check) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.check == check)
            .expect("every check is reported")
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Runs every structural check at absolute tolerance `tol`.
pub fn validate_extension(spec: &ExtensionSpec, tol: f64) -> ValidationReport {
    let p = spec.parts();
    let (m, n, d) = (p.m, p.n, spec.dim());
    let e = |i: usize| -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[i] = 1.0;
        x
    };
    let k = |i: usize| -> Vec<f64> {
        let mut x = vec![0.0; m];
        x[i] = 1.0;
        x
    };
    // scale so that the tolerance is relative to the size of the coefficients
    let scale = max_abs(&p.omega)
        .max(max_abs(&p.alpha))
        .max(max_abs(&p.v_bracket))
        .max(1.0);
    let mut checks = Vec::new();
    let mut push = |check: Check, res: f64, order: i32, what: String| {
        let passed = res <= tol * scale.powi(order);
        let detail = if passed {
            format!("ok (max residual {res:.3e})")
        } else {
            format!("violated at {what}: residual {res:.3e}")
        };
        checks.push(CheckResult {
            check,
            passed,
            max_residual: res,
            detail,
        });
    };

    // skewness
    let mut worst = (0.0, String::new());
    for i in 0..m {
        for j in 0..m {
            for kk in 0..n {
                let r = (p.omega[p.omega_idx(i, j, kk)] + p.omega[p.omega_idx(j, i, kk)]).abs();
                if r > worst.0 {
                    worst = (r, format!("omega(k{},k{})", i + 1, j + 1));
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                let r = (p.v_bracket[p.vb_idx(i, j, kk)] + p.v_bracket[p.vb_idx(j, i, kk)]).abs();
                if r > worst.0 {
                    worst = (r, format!("[e{},e{}]_v", i + 1, j + 1));
                }
            }
        }
    }
    push(Check::Skewness, worst.0, 1, worst.1);

    // Leibniz: α_i[a,b] = [α_i a, b] + [a, α_i b]
    let mut worst = (0.0, String::new());
    for i in 0..m {
        let ki = k(i);
        for a in 0..n {
            for b in 0..n {
                let lhs = spec.alpha_apply(&ki, &spec.vb_apply(&e(a), &e(b)));
                let r1 = spec.vb_apply(&spec.alpha_apply(&ki, &e(a)), &e(b));
                let r2 = spec.vb_apply(&e(a), &spec.alpha_apply(&ki, &e(b)));
                let res = (0..n)
                    .map(|q| (lhs[q] - r1[q] - r2[q]).abs())
                    .fold(0.0, f64::max);
                if res > worst.0 {
                    worst = (res, format!("alpha_k{} on (e{},e{})", i + 1, a + 1, b + 1));
                }
            }
        }
    }
    push(Check::Leibniz, worst.0, 2, worst.1);

    // C1: α_i α_j e_c − α_j α_i e_c = [ω(k_i,k_j), e_c]
    let mut worst = (0.0, String::new());
    for i in 0..m {
        for j in 0..m {
            let w = spec.omega_apply(&k(i), &k(j));
            for c in 0..n {
                let ij = spec.alpha_apply(&k(i), &spec.alpha_apply(&k(j), &e(c)));
                let ji = spec.alpha_apply(&k(j), &spec.alpha_apply(&k(i), &e(c)));
                let ad = spec.vb_apply(&w, &e(c));
                let res = (0..n)
                    .map(|q| (ij[q] - ji[q] - ad[q]).abs())
                    .fold(0.0, f64::max);
                if res > worst.0 {
                    worst = (res, format!("(k{},k{}) on e{}", i + 1, j + 1, c + 1));
                }
            }
        }
    }
    push(Check::C1, worst.0, 2, worst.1);

    // C2: α_X ω(Y,Z) + α_Y ω(Z,X) + α_Z ω(X,Y) = 0
    let mut worst = (0.0, String::new());
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                let a = spec.alpha_apply(&k(i), &spec.omega_apply(&k(j), &k(l)));
                let b = spec.alpha_apply(&k(j), &spec.omega_apply(&k(l), &k(i)));
                let c = spec.alpha_apply(&k(l), &spec.omega_apply(&k(i), &k(j)));
                let res = (0..n)
                    .map(|q| (a[q] + b[q] + c[q]).abs())
                    .fold(0.0, f64::max);
                if res > worst.0 {
                    worst = (res, format!("(k{},k{},k{})", i + 1, j + 1, l + 1));
                }
            }
        }
    }
    push(Check::C2, worst.0, 2, worst.1);

    // Jacobi on the assembled bracket
    let basis: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let mut x = vec![0.0; d];
            x[a] = 1.0;
            x
        })
        .collect();
    let mut worst = (0.0, String::new());
    for a in 0..d {
        for b in a + 1..d {
            let ab = spec.bracket_raw(&basis[a], &basis[b]);
            for c in b + 1..d {
                let bc = spec.bracket_raw(&basis[b], &basis[c]);
                let ca = spec.bracket_raw(&basis[c], &basis[a]);
                let mut s = spec.bracket_raw(&basis[a], &bc);
                spec.bracket_acc(&basis[b], &ca, 1.0, &mut s[m..]);
                spec.bracket_acc(&basis[c], &ab, 1.0, &mut s[m..]);
                let res = max_abs(&s);
                if res > worst.0 {
                    worst = (res, format!("basis triple ({},{},{})", a + 1, b + 1, c + 1));
                }
            }
        }
    }
    push(Check::Jacobi, worst.0, 2, worst.1);

    // W-part of every basis bracket
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let br = spec.bracket_raw(&basis[a], &basis[b]);
            worst = worst.max(max_abs(&br[..m]));
        }
    }
    push(
        Check::SemiInfiniteRange,
        worst,
        1,
        "W-part of a bracket".into(),
    );

    // step via lower central series
    let detected = detect_step(spec);
    let step_ok = detected == Some(p.step);
    checks.push(CheckResult {
        check: Check::Step,
        passed: step_ok,
        max_residual: 0.0,
        detail: match detected {
            Some(s) if s == p.step => format!("ok (detected step {s})"),
            Some(s) => format!("declared step {} but detected step {s}", p.step),
            None => "lower central series does not terminate".to_string(),
        },
    });

    ValidationReport {
        tolerance: tol,
        declared_step: p.step,
        detected_step: detected,
        checks,
    }
}

/// Orthonormal basis (as columns) of the span of `vectors`, dropping
/// singular values below [`SPAN_CUTOFF`].
fn span_basis(vectors: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let mat = DMatrix::from_fn(len, vectors.len(), |r, c| vectors[c][r]);
    let svd = mat.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > SPAN_CUTOFF)
        .map(|(i, _)| u.column(i).iter().copied().collect())
        .collect()
}

/// Nilpotency step from the lower central series, or `None` if it does not
/// terminate within `dim + 1` terms.
pub fn detect_step(spec: &ExtensionSpec) -> Option<usize> {
    let (m, d) = (spec.m(), spec.dim());
    let basis: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let mut x = vec![0.0; d];
            x[a] = 1.0;
            x
        })
        .collect();
    let mut current = basis.clone();
    for k in 1..=d + 1 {
        let mut next = Vec::new();
        for h in &basis {
            for u in &current {
                next.push(spec.bracket_raw(h, u)[m..].to_vec());
            }
        }
        let span = span_basis(&next, spec.n());
        if span.is_empty() {
            return Some(k);
        }
        current = span
            .into_iter()
            .map(|v| {
                let mut x = vec![0.0; m];
                x.extend(v);
                x
            })
            .collect();
    }
    None
}

/// The isomorphism `X + V ↦ X − b(X) + V` produced by [`apply_equivalence`].
#[derive(Clone, Debug, PartialEq)]
pub struct Isomorphism {
    m: usize,
    n: usize,
    /// `b[i*N + j]`: `j`-th component of `b(k_i)`.
    b: Vec<f64>,
}

impl Isomorphism {
    pub fn apply(&self, x: &Element) -> Element {
        let mut out = x.clone();
        for i in 0..self.m {
            let xi = x.w()[i];
            for j in 0..self.n {
                out.coords[self.m + j] -= xi * self.b[i * self.n + j];
            }
        }
        out
    }
}

/// Replaces `(α, ω)` by the equivalent pair obtained from a linear map
/// `b : W → v` given row-major as `b[i*N + j]`.
pub fn apply_equivalence(spec: &ExtensionSpec, b: &[f64]) -> Result<(ExtensionSpec, Isomorphism)> {
    let p = spec.parts();
    let (m, n) = (p.m, p.n);
    if b.len() != m * n {
        return Err(NilError::Shape {
            field: "b",
            expected: format!("{m}x{n}"),
            found: format!("{} entries", b.len()),
        });
    }
    let bx = |i: usize| &b[i * n..(i + 1) * n];
    let mut q = p.clone();
    let unit = |j: usize| {
        let mut x = vec![0.0; n];
        x[j] = 1.0;
        x
    };
    for i in 0..m {
        // α'_i e_j = α_i e_j + [b(k_i), e_j]
        for j in 0..n {
            let ad = spec.vb_apply(bx(i), &unit(j));
            for kk in 0..n {
                let t = q.alpha_idx(i, j, kk);
                q.alpha[t] += ad[kk];
            }
        }
    }
    let ki = |i: usize| {
        let mut x = vec![0.0; m];
        x[i] = 1.0;
        x
    };
    for i in 0..m {
        for j in 0..m {
            let a1 = spec.alpha_apply(&ki(i), bx(j));
            let a2 = spec.alpha_apply(&ki(j), bx(i));
            let br = spec.vb_apply(bx(i), bx(j));
            for kk in 0..n {
                let t = q.omega_idx(i, j, kk);
                q.omega[t] += a1[kk] - a2[kk] + br[kk];
            }
        }
    }
    Ok((
        ExtensionSpec::from_parts(q)?,
        Isomorphism {
            m,
            n,
            b: b.to_vec(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heisenberg() -> ExtensionSpec {
        let mut p = SpecParts::zeros(2, 1, 2);
        p.set_omega_skew(0, 1, 0, 1.0);
        ExtensionSpec::from_parts(p).unwrap()
    }

    #[test]
    fn heisenberg_bracket() {
        let s = heisenberg();
        let x = Element::from_parts(&[1.0, 0.0], &[0.0]);
        let y = Element::from_parts(&[0.0, 1.0], &[0.0]);
        assert_eq!(s.bracket(&x, &y).unwrap().coords(), &[0.0, 0.0, 1.0]);
        assert_eq!(s.bracket(&y, &x).unwrap().coords(), &[0.0, 0.0, -1.0]);
        let r = validate_extension(&s, STRUCTURAL_TOL);
        assert!(r.is_valid(), "{r:?}");
        assert_eq!(r.detected_step, Some(2));
    }

    #[test]
    fn json_roundtrip_and_shape_errors() {
        let s = heisenberg();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"N\":1"));
        let back: ExtensionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let bad = text.replace("\"omega\":[[[0.0],[1.0]]", "\"omega\":[[[0.0,0.0],[1.0]]");
        let err = serde_json::from_str::<ExtensionSpec>(&bad).unwrap_err();
        assert!(err.to_string().contains("omega"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = heisenberg();
        let x = Element::zeros(3, 1);
        assert!(matches!(
            s.bracket(&x, &s.zero()),
            Err(NilError::Dimension { .. })
        ));
    }

    #[test]
    fn permutations_and_descents() {
        let all = Permutation::all(3);
        assert_eq!(all.len(), 6);
        let d: Vec<usize> = all.iter().map(|p| p.descents()).collect();
        assert_eq!(d, vec![0, 1, 1, 1, 1, 2]);
        let s = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(s.compose(&s.inverse()), Permutation::identity(3));
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn nested_bracket_matches_manual() {
        let s = heisenberg();
        let ks = [s.basis(0), s.basis(1)];
        let sig = Permutation::from_one_based(&[2, 1]).unwrap();
        let out = s.nested_bracket(&sig, &ks).unwrap();
        assert_eq!(out.v(), &[-1.0]);
    }

    #[test]
    fn truncation_keeps_leading_directions() {
        let s = heisenberg();
        let t = s.truncate(1).unwrap();
        assert_eq!(t.m(), 1);
        assert_eq!(detect_step(&t), Some(1));
        assert!(s.truncate(3).is_err());
    }
}
