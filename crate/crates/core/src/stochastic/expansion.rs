//! Lie-polynomial expansions of the Brownian motion: the Stratonovich
//! signature form and its iterated-Itô rewriting.

use crate::algebra::{ExtensionSpec, Permutation};
use crate::error::{NilError, Result};
use crate::stochastic::coeffs::{
    arranged_sigma, c_coefficient, f_alpha, is_admissible_tau, ito_words, ItoWord, Slot,
};
use crate::stochastic::driver::BrownianDriver;

fn rat(r: num_rational::Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Flattened multi-index of `idx` in `[D]^n`.
fn flat(idx: &[usize], d: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * d + i)
}

fn unflat(mut k: usize, n: usize, d: usize, out: &mut [usize]) {
    for slot in out[..n].iter_mut().rev() {
        *slot = k % d;
        k /= d;
    }
}

/// `L_n[i_1..i_n] = [[h_{i1}, h_{i2}], …, h_{in}]` for `n ≥ 2`, stored as
/// `D^n × N`.
pub fn left_nested_tensor(spec: &ExtensionSpec, n: usize) -> Vec<f64> {
    let (m, nv, d) = (spec.m(), spec.n(), spec.dim());
    assert!(n >= 2, "left-nested tensor needs at least two slots");
    let c = spec.structure();
    let mut cur = c.to_vec(); // level 2
    for _ in 2..n {
        let rows = cur.len() / nv;
        let mut next = vec![0.0; rows * d * nv];
        for r in 0..rows {
            let u = &cur[r * nv..(r + 1) * nv];
            if u.iter().all(|&x| x == 0.0) {
                continue;
            }
            for j in 0..d {
                let out = &mut next[(r * d + j) * nv..(r * d + j + 1) * nv];
                for (a, &ua) in u.iter().enumerate() {
                    if ua == 0.0 {
                        continue;
                    }
                    let blk = &c[((m + a) * d + j) * nv..((m + a) * d + j + 1) * nv];
                    for (o, b) in out.iter_mut().zip(blk) {
                        *o += ua * b;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// `Φ_n = Σ_σ c_n^σ F_n^σ` as a `D^n × N` tensor, from `L_n`.
fn dynkin_tensor(spec: &ExtensionSpec, n: usize, l: &[f64]) -> Vec<f64> {
    let (nv, d) = (spec.n(), spec.dim());
    let perms: Vec<(Permutation, f64)> = Permutation::all(n)
        .into_iter()
        .map(|p| {
            let c = rat(c_coefficient(&p));
            (p, c)
        })
        .collect();
    let total = d.pow(n as u32);
    let mut out = vec![0.0; total * nv];
    let mut idx = vec![0usize; n];
    let mut perm_idx = vec![0usize; n];
    for k in 0..total {
        unflat(k, n, d, &mut idx);
        let o = &mut out[k * nv..(k + 1) * nv];
        for (p, c) in &perms {
            for (i, slot) in perm_idx.iter_mut().enumerate() {
                *slot = idx[p.apply(i)];
            }
            let src = &l[flat(&perm_idx, d) * nv..(flat(&perm_idx, d) + 1) * nv];
            for (a, b) in o.iter_mut().zip(src) {
                *a += c * b;
            }
        }
    }
    out
}

/// Contraction `Σ_I X[I] T[I][:]`.
fn contract(x: &[f64], t: &[f64], nv: usize, out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&t[i * nv..(i + 1) * nv]) {
            *o += xi * v;
        }
    }
}

/// `F̂^{σ,α}` computed through an explicit slot arrangement `τ`: the
/// Brownian slots first, then each contracted pair `Σ_j h_j ⊗ h_j`.
/// Returns a `D^p × N` tensor.
pub fn f_hat_tensor(
    spec: &ExtensionSpec,
    sigma: &Permutation,
    alpha: &ItoWord,
    tau: &Permutation,
) -> Result<Vec<f64>> {
    let n = alpha.order();
    if sigma.len() != n || n < 2 {
        return Err(NilError::InvalidParameter(format!(
            "σ of length {} does not match α of order {n} (need n ≥ 2)",
            sigma.len()
        )));
    }
    if !is_admissible_tau(alpha, tau) {
        return Err(NilError::InvalidParameter(format!(
            "τ = {:?} is not an admissible arrangement for α = {:?}",
            tau.images(),
            alpha.letters()
        )));
    }
    let sp = arranged_sigma(sigma, tau)?;
    let (nv, d) = (spec.n(), spec.dim());
    let (p, q) = (alpha.p(), alpha.q());
    let l = left_nested_tensor(spec, n);
    let mut out = vec![0.0; d.pow(p as u32) * nv];
    let mut kidx = vec![0usize; p.max(1)];
    let mut jidx = vec![0usize; q.max(1)];
    let mut arranged = vec![0usize; n];
    let mut lidx = vec![0usize; n];
    for k in 0..d.pow(p as u32) {
        unflat(k, p, d, &mut kidx);
        for j in 0..d.pow(q as u32) {
            unflat(j, q, d, &mut jidx);
            arranged[..p].copy_from_slice(&kidx[..p]);
            for s in 0..q {
                arranged[p + 2 * s] = jidx[s];
                arranged[p + 2 * s + 1] = jidx[s];
            }
            for (i, slot) in lidx.iter_mut().enumerate() {
                *slot = arranged[sp.apply(i)];
            }
            let f = flat(&lidx, d);
            let o = &mut out[k * nv..(k + 1) * nv];
            for (a, b) in o.iter_mut().zip(&l[f * nv..(f + 1) * nv]) {
                *a += b;
            }
        }
    }
    Ok(out)
}

/// `Σ_σ c_n^σ F̂^{σ,α}` from the Dynkin tensor `Φ_n` with the pair slots of
/// `α` contracted in place.
fn contracted_dynkin(phi: &[f64], alpha: &ItoWord, d: usize, nv: usize) -> Vec<f64> {
    let slots = alpha.pair_index_slots();
    let n = slots.len();
    let (p, q) = (alpha.p(), alpha.q());
    let mut out = vec![0.0; d.pow(p as u32) * nv];
    let mut kidx = vec![0usize; p.max(1)];
    let mut jidx = vec![0usize; q.max(1)];
    let mut natural = vec![0usize; n];
    for k in 0..d.pow(p as u32) {
        unflat(k, p, d, &mut kidx);
        for j in 0..d.pow(q as u32) {
            unflat(j, q, d, &mut jidx);
            for (pos, s) in slots.iter().enumerate() {
                natural[pos] = match *s {
                    Slot::Brownian(r) => kidx[r],
                    Slot::Pair(s) => jidx[s],
                };
            }
            let f = flat(&natural, d);
            let o = &mut out[k * nv..(k + 1) * nv];
            for (a, b) in o.iter_mut().zip(&phi[f * nv..(f + 1) * nv]) {
                *a += b;
            }
        }
    }
    out
}

/// Dynkin tensors `Φ_n`, `n = 2..=step`, for one spec.
#[derive(Clone, Debug)]
pub struct LieProjector {
    nv: usize,
    m: usize,
    phi: Vec<Vec<f64>>,
}

impl LieProjector {
    pub fn new(spec: &ExtensionSpec) -> Self {
        let phi = (2..=spec.step())
            .map(|n| dynkin_tensor(spec, n, &left_nested_tensor(spec, n)))
            .collect();
        LieProjector {
            nv: spec.n(),
            m: spec.m(),
            phi,
        }
    }

    /// `Φ_n` for `n ≥ 2`.
    pub fn phi(&self, n: usize) -> &[f64] {
        &self.phi[n - 2]
    }

    pub fn max_level(&self) -> usize {
        self.phi.len() + 1
    }
}

/// Exact signature levels `1..=depth` of the piecewise-linear driver path
/// (Chen products of segment exponentials). Level `n` has `D^n` entries.
pub fn polyline_signature(driver: &BrownianDriver, depth: usize) -> Vec<Vec<f64>> {
    let d = driver.dim();
    let mut levels: Vec<Vec<f64>> = (1..=depth).map(|n| vec![0.0; d.pow(n as u32)]).collect();
    let mut powers: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for inc in driver.increments() {
        // Δ^{⊗k}/k!
        powers.clear();
        powers.push(inc.to_vec());
        for k in 2..=depth {
            let prev = &powers[k - 2];
            let mut next = vec![0.0; prev.len() * d];
            for (i, &a) in prev.iter().enumerate() {
                for (b, &x) in inc.iter().enumerate() {
                    next[i * d + b] = a * x / k as f64;
                }
            }
            powers.push(next);
        }
        for n in (1..=depth).rev() {
            let mut add = powers[n - 1].clone();
            for a in 1..n {
                let (sa, pw) = (&levels[a - 1], &powers[n - a - 1]);
                let w = pw.len();
                for (i, &x) in sa.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (o, y) in add[i * w..(i + 1) * w].iter_mut().zip(pw) {
                        *o += x * y;
                    }
                }
            }
            for (s, a) in levels[n - 1].iter_mut().zip(&add) {
                *s += a;
            }
        }
    }
    levels
}

/// `g_t = Σ_{n=1}^{r} Σ_σ c_n^σ F_n^σ(∫_{Δ_n} dB^{⊗n})` with the iterated
/// integrals of the piecewise-linear driver evaluated exactly.
pub fn signature_eval_with(proj: &LieProjector, driver: &BrownianDriver) -> Vec<f64> {
    let levels = polyline_signature(driver, proj.max_level());
    let mut out = levels[0].clone();
    for n in 2..=proj.max_level() {
        contract(&levels[n - 1], proj.phi(n), proj.nv, &mut out[proj.m..]);
    }
    out
}

/// A chain node carries `X = ∫ X_parent ⊗ s^{exp} dB_s` (left-point sums).
#[derive(Clone, Debug)]
struct ChainNode {
    parent: Option<usize>,
    exp: u32,
    depth: usize,
}

#[derive(Clone, Debug)]
struct PlanTerm {
    /// `None` for a deterministic term (`p = 0`).
    chain: Option<usize>,
    t_pow: u32,
    coeff: f64,
    tensor: usize,
}

/// One term of the iterated-Itô expansion before monomial splitting.
#[derive(Clone, Debug)]
pub struct ItoTerm {
    pub n: usize,
    pub alpha: ItoWord,
    pub weight: f64,
    /// `Σ_σ c_n^σ F̂^{σ,α}` as a `D^p × N` tensor.
    pub tensor: Vec<f64>,
}

/// Precomputed iterated-Itô expansion of the Brownian motion for one spec.
#[derive(Clone, Debug)]
pub struct ExpansionPlan {
    d: usize,
    nv: usize,
    m: usize,
    nodes: Vec<ChainNode>,
    /// Node indices sorted by decreasing depth (update order).
    order: Vec<usize>,
    tensors: Vec<Vec<f64>>,
    terms: Vec<PlanTerm>,
    ito_terms: Vec<ItoTerm>,
}

impl ExpansionPlan {
    pub fn new(spec: &ExtensionSpec) -> Self {
        let proj = LieProjector::new(spec);
        let (d, nv) = (spec.dim(), spec.n());
        let mut nodes: Vec<ChainNode> = Vec::new();
        let mut node_of = std::collections::BTreeMap::<Vec<u32>, usize>::new();
        let mut tensors = Vec::new();
        let mut terms = Vec::new();
        let mut ito_terms = Vec::new();
        for n in 2..=spec.step() {
            for alpha in ito_words(n) {
                let tensor = contracted_dynkin(proj.phi(n), &alpha, d, nv);
                if tensor.iter().all(|&x| x.abs() < 1e-300) {
                    continue;
                }
                let weight = rat(alpha.weight());
                let p = alpha.p();
                let poly = f_alpha(&alpha);
                let tidx = tensors.len();
                tensors.push(tensor.clone());
                for (exps, c) in &poly.terms {
                    let chain = if p == 0 {
                        None
                    } else {
                        let mut parent = None;
                        for k in 1..=p {
                            let key = exps[..k].to_vec();
                            let idx = *node_of.entry(key).or_insert_with(|| {
                                nodes.push(ChainNode {
                                    parent,
                                    exp: exps[k - 1],
                                    depth: k,
                                });
                                nodes.len() - 1
                            });
                            parent = Some(idx);
                        }
                        parent
                    };
                    terms.push(PlanTerm {
                        chain,
                        t_pow: exps[p],
                        coeff: weight * rat(*c),
                        tensor: tidx,
                    });
                }
                ito_terms.push(ItoTerm {
                    n,
                    alpha,
                    weight,
                    tensor,
                });
            }
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|a, b| nodes[*b].depth.cmp(&nodes[*a].depth));
        ExpansionPlan {
            d,
            nv,
            m: spec.m(),
            nodes,
            order,
            tensors,
            terms,
            ito_terms,
        }
    }

    /// The nonvanishing `(n, α)` terms.
    pub fn ito_terms(&self) -> &[ItoTerm] {
        &self.ito_terms
    }

    /// Endpoint `g_t` from a driver (full coordinates).
    pub fn endpoint(&self, driver: &BrownianDriver) -> Vec<f64> {
        let (d, nv) = (self.d, self.nv);
        let mut states: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; d.pow(n.depth as u32)])
            .collect();
        let mut scaled = vec![0.0; d];
        let times = driver.times();
        for (j, inc) in driver.increments().enumerate() {
            let tj = times[j];
            for &ni in &self.order {
                let node = &self.nodes[ni];
                let w = if node.exp == 0 {
                    1.0
                } else {
                    tj.powi(node.exp as i32)
                };
                for (s, x) in scaled.iter_mut().zip(inc) {
                    *s = w * x;
                }
                match node.parent {
                    None => {
                        for (o, s) in states[ni].iter_mut().zip(&scaled) {
                            *o += s;
                        }
                    }
                    Some(pi) => {
                        let (parent, target) = if pi < ni {
                            let (a, b) = states.split_at_mut(ni);
                            (&a[pi], &mut b[0])
                        } else {
                            let (a, b) = states.split_at_mut(pi);
                            (&b[0], &mut a[ni])
                        };
                        for (i, &x) in parent.iter().enumerate() {
                            if x == 0.0 {
                                continue;
                            }
                            for (o, s) in target[i * d..(i + 1) * d].iter_mut().zip(&scaled) {
                                *o += x * s;
                            }
                        }
                    }
                }
            }
        }
        let t = driver.horizon();
        let mut out = driver.endpoint();
        let vpart = &mut out[self.m..];
        let mut tmp = vec![0.0; nv];
        for term in &self.terms {
            tmp.fill(0.0);
            let tensor = &self.tensors[term.tensor];
            match term.chain {
                None => tmp.copy_from_slice(&tensor[..nv]),
                Some(ci) => contract(&states[ci], tensor, nv, &mut tmp),
            }
            let s = term.coeff * t.powi(term.t_pow as i32);
            for (o, x) in vpart.iter_mut().zip(&tmp) {
                *o += s * x;
            }
        }
        out
    }
}

/// The explicit step-3 form
/// `B_t + ½∫[B,dB] + (1/6)∫_{Δ₂}([[B,dB],dB] + [[dB₂,dB₁],B₁]) + (1/12) t Σ_i [[B_t,h_i],h_i]`
/// with Itô integrals as left-point sums.
pub fn step3_explicit_endpoint(spec: &ExtensionSpec, driver: &BrownianDriver) -> Result<Vec<f64>> {
    if spec.step() > 3 {
        return Err(NilError::InvalidParameter(
            "explicit form only covers step ≤ 3".into(),
        ));
    }
    let (m, nv, d) = (spec.m(), spec.n(), spec.dim());
    let basis: Vec<Vec<f64>> = (0..d).map(|a| spec.basis(a).into_coords()).collect();
    let mut b = vec![0.0; d];
    let mut area = vec![0.0; d]; // running ∫[B,dB], v-part only nonzero
    let mut z = vec![0.0; d * d]; // running Σ ΔB ⊗ B
    let mut half = vec![0.0; nv];
    let mut t1 = vec![0.0; nv];
    let mut t2 = vec![0.0; nv];
    for inc in driver.increments() {
        // [[B,dB],dB] term uses the running area before this step
        spec.bracket_acc(&area, inc, 1.0, &mut t1);
        // Σ_{a,b} Z_ab [[ΔB, h_a], h_b]
        let u: Vec<Vec<f64>> = (0..d).map(|a| spec.bracket_raw(inc, &basis[a])).collect();
        for bi in 0..d {
            let mut s = vec![0.0; d];
            for a in 0..d {
                let zab = z[a * d + bi];
                if zab != 0.0 {
                    for (o, x) in s[m..].iter_mut().zip(&u[a][m..]) {
                        *o += zab * x;
                    }
                }
            }
            spec.bracket_acc(&s, &basis[bi], 1.0, &mut t2);
        }
        let db = spec.bracket_raw(&b, inc);
        for (o, x) in half.iter_mut().zip(&db[m..]) {
            *o += x;
        }
        for (o, x) in area[m..].iter_mut().zip(&db[m..]) {
            *o += x;
        }
        for a in 0..d {
            for bi in 0..d {
                z[a * d + bi] += inc[a] * b[bi];
            }
        }
        for (o, x) in b.iter_mut().zip(inc) {
            *o += x;
        }
    }
    let t = driver.horizon();
    let mut drift = vec![0.0; nv];
    for h in &basis {
        let inner = spec.bracket_raw(&b, h);
        spec.bracket_acc(&inner, h, 1.0, &mut drift);
    }
    let mut out = b;
    for k in 0..nv {
        out[m + k] += 0.5 * half[k] + (t1[k] + t2[k]) / 6.0 + t * drift[k] / 12.0;
    }
    Ok(out)
}
