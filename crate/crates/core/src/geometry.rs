//! Group law, left translation, Cameron–Martin lengths, distance bounds and
//! Ricci curvature of the simply connected group with Lie algebra `g`.
//!
//! The group is `g` itself with product
//!
//! ```text
//! g·h = g + h + Σ_{k=1}^{r-1} Σ_{(n,m)∈I_k} a^k_{n,m} ad_g^{n1} ad_h^{m1} ⋯ ad_g^{nk} ad_h^{mk} g
//! a^k_{n,m} = (−1)^k / ((k+1) · m! · n! · (|n|+1))
//! ```
//!
//! identity `0` and inverse `g⁻¹ = −g`.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{Element, ExtensionSpec};
use crate::error::{NilError, Result};
use crate::norms::{hs_norm, structure_map, StructureMap};

/// Default number of Gauss–Legendre points per path segment.
pub const DEFAULT_QUADRATURE_POINTS: usize = 16;
/// Maximum number of interior knots used when refining the distance upper bound.
pub const MAX_INTERIOR_KNOTS: usize = 8;

/// One application of `ad_g` or `ad_h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ad {
    G,
    H,
}

/// A single term `a^k_{n,m} ad_g^{n1} ad_h^{m1} ⋯ ad_g^{nk} ad_h^{mk} g`.
#[derive(Clone, Debug, PartialEq)]
pub struct BchdTerm {
    pub n: Vec<u32>,
    pub m: Vec<u32>,
    pub coeff: f64,
}

impl BchdTerm {
    /// The `ad` operators in the order they act on `g` (innermost first).
    pub fn application_order(&self) -> Vec<Ad> {
        let mut ops = Vec::new();
        for i in (0..self.n.len()).rev() {
            ops.extend(std::iter::repeat_n(Ad::H, self.m[i] as usize));
            ops.extend(std::iter::repeat_n(Ad::G, self.n[i] as usize));
        }
        ops
    }

    pub fn degree(&self) -> usize {
        (self.n.iter().sum::<u32>() + self.m.iter().sum::<u32>()) as usize
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Every term with `|n| + |m| < step`, in enumeration order.
pub fn bchd_terms(step: usize) -> Vec<BchdTerm> {
    let mut out = Vec::new();
    let max_deg = step.saturating_sub(1) as u32;
    for k in 1..step {
        // pairs (n_i, m_i) with n_i + m_i ≥ 1 and total degree ≤ max_deg
        let mut stack: Vec<(Vec<u32>, Vec<u32>, u32)> = vec![(Vec::new(), Vec::new(), 0)];
        while let Some((n, m, deg)) = stack.pop() {
            if n.len() == k {
                let sn: u32 = n.iter().sum();
                let denom = (k as f64 + 1.0)
                    * m.iter().map(|&x| factorial(x)).product::<f64>()
                    * n.iter().map(|&x| factorial(x)).product::<f64>()
                    * (sn as f64 + 1.0);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                out.push(BchdTerm {
                    n,
                    m,
                    coeff: sign / denom,
                });
                continue;
            }
            let remaining = (k - n.len()) as u32;
            for total in 1..=max_deg.saturating_sub(deg + remaining - 1) {
                for ni in 0..=total {
                    let mut n2 = n.clone();
                    let mut m2 = m.clone();
                    n2.push(ni);
                    m2.push(total - ni);
                    stack.push((n2, m2, deg + total));
                }
            }
        }
    }
    out
}

/// Node of the word trie; the value at a node is the bracket word read from
/// the root, applied to `g`.
#[derive(Clone, Debug, Default)]
struct TrieNode {
    coeff: f64,
    parent: usize,
    op: Option<Ad>,
    children: Vec<(Ad, usize)>,
}

/// The group law of a given step, with terms merged by `ad`-word and stored
/// as a prefix trie so shared prefixes are evaluated once.
#[derive(Clone, Debug)]
pub struct BchdTable {
    step: usize,
    nodes: Vec<TrieNode>,
    words: BTreeMap<Vec<Ad>, f64>,
}

impl BchdTable {
    pub fn new(step: usize) -> Self {
        let mut words: BTreeMap<Vec<Ad>, f64> = BTreeMap::new();
        for t in bchd_terms(step) {
            let ops = t.application_order();
            // ad_g g = 0
            if ops.first() == Some(&Ad::G) {
                continue;
            }
            *words.entry(ops).or_insert(0.0) += t.coeff;
        }
        words.retain(|_, c| c.abs() > 1e-300);
        let mut nodes = vec![TrieNode::default()];
        for (word, &c) in &words {
            let mut cur = 0;
            for &op in word {
                cur = match nodes[cur].children.iter().find(|(o, _)| *o == op) {
                    Some(&(_, idx)) => idx,
                    None => {
                        nodes.push(TrieNode {
                            parent: cur,
                            op: Some(op),
                            ..TrieNode::default()
                        });
                        let idx = nodes.len() - 1;
                        nodes[cur].children.push((op, idx));
                        idx
                    }
                };
            }
            nodes[cur].coeff += c;
        }
        BchdTable { step, nodes, words }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Merged coefficient of each `ad`-word (application order).
    pub fn words(&self) -> &BTreeMap<Vec<Ad>, f64> {
        &self.words
    }

    /// `d_ℓ` for `ℓ = 1..step-1`: the coefficients of `ad_g^ℓ g'` in the
    /// left-trivialized derivative `L_{g⁻¹*} g'`.
    pub fn length_coefficients(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.step.saturating_sub(1)];
        for t in bchd_terms(self.step) {
            if t.m.last().copied().unwrap_or(0) == 0 {
                continue;
            }
            let sn: u32 = t.n.iter().sum();
            let sign = if sn % 2 == 0 { 1.0 } else { -1.0 };
            d[t.degree() - 1] += sign * t.coeff;
        }
        d
    }

    /// `Σ coeff · word(g, h)` accumulated into `out` (full coordinates).
    /// Node values live in `scratch`, so nothing is allocated once it has grown.
    fn accumulate_with(
        &self,
        spec: &ExtensionSpec,
        g: &[f64],
        h: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let (m, n) = (spec.m(), spec.n());
        let len = self.nodes.len() * n;
        if scratch.len() < len {
            scratch.resize(len, 0.0);
        }
        scratch[..len].fill(0.0);
        for i in 1..self.nodes.len() {
            let node = &self.nodes[i];
            let x = if node.op == Some(Ad::G) { g } else { h };
            let (done, rest) = scratch.split_at_mut(i * n);
            let val = &mut rest[..n];
            if node.parent == 0 {
                spec.bracket_acc(x, g, 1.0, val);
            } else {
                let pv = &done[node.parent * n..(node.parent + 1) * n];
                spec.bracket_acc_v(x, pv, 1.0, val);
            }
            if node.coeff != 0.0 {
                for (o, v) in out[m..].iter_mut().zip(val.iter()) {
                    *o += node.coeff * v;
                }
            }
        }
    }

    /// Derivative of `Σ coeff · word(g, x)` in `x` along `v`.
    fn accumulate_derivative(
        &self,
        spec: &ExtensionSpec,
        g: &[f64],
        x: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        let m = spec.m();
        let d = spec.dim();
        let mut stack: Vec<(usize, Vec<f64>, Vec<f64>)> = vec![(0, g.to_vec(), vec![0.0; d])];
        while let Some((node, val, der)) = stack.pop() {
            for &(op, child) in &self.nodes[node].children {
                let y = if op == Ad::G { g } else { x };
                let next = spec.bracket_raw(y, &val);
                let mut dnext = spec.bracket_raw(y, &der);
                if op == Ad::H {
                    spec.bracket_acc(v, &val, 1.0, &mut dnext[m..]);
                }
                let c = self.nodes[child].coeff;
                if c != 0.0 {
                    for (o, dv) in out[m..].iter_mut().zip(&dnext[m..]) {
                        *o += c * dv;
                    }
                }
                if !self.nodes[child].children.is_empty() {
                    stack.push((child, next, dnext));
                }
            }
        }
    }
}

/// Precomputed group law for one spec.
#[derive(Clone, Debug)]
pub struct GroupLaw {
    spec: ExtensionSpec,
    table: BchdTable,
    d_coeffs: Vec<f64>,
}

impl GroupLaw {
    pub fn new(spec: &ExtensionSpec) -> Self {
        let table = BchdTable::new(spec.step());
        let d_coeffs = table.length_coefficients();
        GroupLaw {
            spec: spec.clone(),
            table,
            d_coeffs,
        }
    }

    pub fn spec(&self) -> &ExtensionSpec {
        &self.spec
    }

    pub fn table(&self) -> &BchdTable {
        &self.table
    }

    /// `g·h` on raw coordinates.
    pub fn multiply_raw(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        self.multiply_into(g, h, &mut out, &mut Vec::new());
        out
    }

    /// `out = g·h` without allocating, given a reusable `scratch` buffer.
    pub fn multiply_into(&self, g: &[f64], h: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        for ((o, a), b) in out.iter_mut().zip(g).zip(h) {
            *o = a + b;
        }
        self.table.accumulate_with(&self.spec, g, h, out, scratch);
    }

    pub fn multiply(&self, g: &Element, h: &Element) -> Result<Element> {
        self.spec.check_element(g)?;
        self.spec.check_element(h)?;
        Element::from_coords(self.spec.m(), self.multiply_raw(g.coords(), h.coords()))
    }

    /// `L_{g*} v_x = d/dt|₀ g·(x + t v)`.
    pub fn pushforward_raw(&self, g: &[f64], x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.table
            .accumulate_derivative(&self.spec, g, x, v, &mut out);
        out
    }

    pub fn left_pushforward(&self, g: &Element, x: &Element, v: &Element) -> Result<Element> {
        for e in [g, x, v] {
            self.spec.check_element(e)?;
        }
        Element::from_coords(
            self.spec.m(),
            self.pushforward_raw(g.coords(), x.coords(), v.coords()),
        )
    }

    /// `d_ℓ`, `ℓ = 1..step-1`.
    pub fn length_coefficients(&self) -> &[f64] {
        &self.d_coeffs
    }

    /// `L_{g⁻¹*} g'` = `g' + Σ_ℓ d_ℓ ad_g^ℓ g'`.
    pub fn left_log_derivative(&self, g: &[f64], dg: &[f64]) -> Vec<f64> {
        let m = self.spec.m();
        let mut out = dg.to_vec();
        let mut cur = dg.to_vec();
        for &dl in &self.d_coeffs {
            cur = self.spec.bracket_raw(g, &cur);
            for (o, c) in out[m..].iter_mut().zip(&cur[m..]) {
                *o += dl * c;
            }
        }
        out
    }

    fn speed(&self, g: &[f64], dg: &[f64]) -> f64 {
        self.left_log_derivative(g, dg)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Length of the piecewise-linear interpolant of `knots`.
    pub fn path_length(&self, knots: &[Element], quadrature_points: usize) -> Result<f64> {
        for k in knots {
            self.spec.check_element(k)?;
        }
        let quad = gauss_legendre(quadrature_points)?;
        let raw: Vec<&[f64]> = knots.iter().map(|k| k.coords()).collect();
        Ok(self.polyline_length(&raw, &quad))
    }

    fn polyline_length(&self, knots: &[&[f64]], quad: &GaussLegendre) -> f64 {
        let mut total = 0.0;
        let mut point = vec![0.0; self.spec.dim()];
        for w in knots.windows(2) {
            let delta: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| a - b).collect();
            total += quad.integrate(0.0, 1.0, |s| {
                for ((p, a), dl) in point.iter_mut().zip(w[0]).zip(&delta) {
                    *p = a + s * dl;
                }
                self.speed(&point, &delta)
            });
        }
        total
    }

    /// Length of a C¹ curve `s ↦ (γ(s), γ'(s))` on `[a, b]`, using composite
    /// Gauss–Legendre quadrature on `intervals` equal pieces.
    pub fn curve_length<F>(
        &self,
        curve: F,
        a: f64,
        b: f64,
        intervals: usize,
        quadrature_points: usize,
    ) -> Result<f64>
    where
        F: Fn(f64) -> (Element, Element),
    {
        let quad = gauss_legendre(quadrature_points)?;
        let h = (b - a) / intervals.max(1) as f64;
        let mut total = 0.0;
        for i in 0..intervals.max(1) {
            let lo = a + i as f64 * h;
            total += quad.integrate(lo, lo + h, |s| {
                let (g, dg) = curve(s);
                self.speed(g.coords(), dg.coords())
            });
        }
        Ok(total)
    }
}

fn gauss_legendre(points: usize) -> Result<GaussLegendre> {
    let n = NonZeroUsize::new(points)
        .ok_or_else(|| NilError::InvalidParameter("quadrature needs at least one point".into()))?;
    Ok(GaussLegendre::new(n))
}

/// `g·h`.
pub fn bchd_multiply(spec: &ExtensionSpec, g: &Element, h: &Element) -> Result<Element> {
    GroupLaw::new(spec).multiply(g, h)
}

/// `g⁻¹ = −g`.
pub fn inverse(g: &Element) -> Element {
    -g
}

/// `L_{g*} v_x`.
pub fn left_pushforward(
    spec: &ExtensionSpec,
    g: &Element,
    x: &Element,
    v: &Element,
) -> Result<Element> {
    GroupLaw::new(spec).left_pushforward(g, x, v)
}

/// Length of the piecewise-linear path through `knots`.
pub fn path_length(
    spec: &ExtensionSpec,
    knots: &[Element],
    quadrature_points: usize,
) -> Result<f64> {
    GroupLaw::new(spec).path_length(knots, quadrature_points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub upper: f64,
    /// Certified upper bound on `sup ‖[h,k]‖` over unit `h, k`.
    pub bracket_bound: f64,
    pub kappa: f64,
    pub epsilon0: f64,
    pub evaluations: usize,
}

/// Bounds on the Cameron–Martin distance from the identity to `y`.
///
/// The lower bound is `½ min(ε₀, ‖y‖)` with `ε₀ = 1/(2κ) ∧ 1` and
/// `κ = Σ_ℓ |d_ℓ| C^ℓ`, where `C` is the Hilbert–Schmidt norm of the bracket
/// (an upper bound on its operator norm). The upper bound is the length of
/// the straight line, refined by coordinate descent over up to
/// [`MAX_INTERIOR_KNOTS`] interior knots within `budget` length evaluations.
pub fn distance_bounds(spec: &ExtensionSpec, y: &Element, budget: usize) -> Result<DistanceBounds> {
    spec.check_element(y)?;
    let law = GroupLaw::new(spec);
    let c = hs_norm(&structure_map(spec, StructureMap::Bracket));
    let kappa: f64 = law
        .length_coefficients()
        .iter()
        .enumerate()
        .map(|(i, d)| d.abs() * c.powi(i as i32 + 1))
        .sum();
    let epsilon0 = if kappa > 0.0 {
        (0.5 / kappa).min(1.0)
    } else {
        1.0
    };
    let ny = y.norm();
    let lower = 0.5 * epsilon0.min(ny);

    let quad = gauss_legendre(DEFAULT_QUADRATURE_POINTS)?;
    let dim = spec.dim();
    let k = MAX_INTERIOR_KNOTS;
    let mut knots: Vec<Vec<f64>> = (0..=k + 1)
        .map(|j| {
            y.coords()
                .iter()
                .map(|c| c * j as f64 / (k + 1) as f64)
                .collect()
        })
        .collect();
    let eval = |knots: &[Vec<f64>]| {
        let refs: Vec<&[f64]> = knots.iter().map(|v| v.as_slice()).collect();
        law.polyline_length(&refs, &quad)
    };
    let mut best = eval(&knots);
    let mut evaluations = 1;
    let mut delta = 0.25 * ny.max(1e-12);
    while evaluations < budget && delta > 1e-10 * ny.max(1e-12) {
        let mut improved = false;
        'sweep: for j in 1..=k {
            for c in 0..dim {
                for sgn in [1.0, -1.0] {
                    if evaluations >= budget {
                        break 'sweep;
                    }
                    knots[j][c] += sgn * delta;
                    let len = eval(&knots);
                    evaluations += 1;
                    if len < best {
                        best = len;
                        improved = true;
                        break;
                    }
                    knots[j][c] -= sgn * delta;
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    Ok(DistanceBounds {
        lower,
        upper: best.min(ny),
        bracket_bound: c,
        kappa,
        epsilon0,
        evaluations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicciResult {
    pub dim: usize,
    /// Row-major matrix of `X ↦ Ric X` in the orthonormal basis.
    pub matrix: Vec<f64>,
    /// Eigenvalues of the Ricci form, ascending.
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue of `X ↦ Σ_i ‖[h_i, X]‖²`.
    pub bracket_form_max: f64,
    /// `K_P = −½ · bracket_form_max`.
    pub k_p: f64,
}

/// Ricci form `⟨Ric X, X⟩ = ¼ Σ_{i,j} ⟨X,[h_i,h_j]⟩² − ½ Σ_i ‖[h_i,X]‖²`
/// and the constant `K_P` bounding it from below.
pub fn ricci_form(spec: &ExtensionSpec) -> RicciResult {
    let (m, n, d) = (spec.m(), spec.n(), spec.dim());
    let c = spec.structure();
    let mut first = DMatrix::<f64>::zeros(d, d);
    for ij in 0..d * d {
        let blk = &c[ij * n..(ij + 1) * n];
        for a in 0..n {
            for b in 0..n {
                first[(m + a, m + b)] += blk[a] * blk[b];
            }
        }
    }
    let mut form = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        // M_i[:, b] = [h_i, h_b]
        let mi = DMatrix::from_fn(n, d, |k, b| c[(i * d + b) * n + k]);
        form += mi.transpose() * mi;
    }
    let ric = first * 0.25 - &form * 0.5;
    let ric = (&ric + ric.transpose()) * 0.5;
    let mut eig: Vec<f64> = ric
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    let bmax = form
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max);
    RicciResult {
        dim: d,
        matrix: ric.transpose().iter().copied().collect(),
        eigenvalues: eig,
        bracket_form_max: bmax,
        k_p: -0.5 * bmax,
    }
}

impl RicciResult {
    /// `⟨Ric X, X⟩`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|i| x[i] * (0..d).map(|j| self.matrix[i * d + j] * x[j]).sum::<f64>())
            .sum()
    }
}
