//! Exact combinatorial coefficients of the Brownian-motion expansion.

use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::algebra::Permutation;
use crate::error::{NilError, Result};

fn binomial(n: i64, k: i64) -> i64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `c_n^σ = (−1)^{e(σ)} / (n² · C(n−1, e(σ)))` with `e(σ)` the descent count.
pub fn c_coefficient(sigma: &Permutation) -> Rational64 {
    let n = sigma.len() as i64;
    let e = sigma.descents() as i64;
    let sign = if e % 2 == 0 { 1 } else { -1 };
    Rational64::new(sign, n * n * binomial(n - 1, e))
}

/// A word in `{1, 2}` whose letters sum to `n`, with weight `2^{−(n − len)}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItoWord(pub Vec<u8>);

impl ItoWord {
    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// Total `Σ α_i`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// Number of `1` letters (retained Brownian slots).
    pub fn p(&self) -> usize {
        self.0.iter().filter(|&&a| a == 1).count()
    }

    /// Number of `2` letters (contracted pairs).
    pub fn q(&self) -> usize {
        self.0.iter().filter(|&&a| a == 2).count()
    }

    pub fn weight(&self) -> Rational64 {
        Rational64::new(1, 1i64 << (self.order() - self.0.len()))
    }

    /// Tensor slots in time order: `Some(r)` for the `r`-th Brownian slot,
    /// `None` for a slot belonging to a contracted pair (two per `2`).
    pub fn pair_index_slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        let (mut r, mut q) = (0, 0);
        for &a in &self.0 {
            if a == 1 {
                out.push(Slot::Brownian(r));
                r += 1;
            } else {
                out.push(Slot::Pair(q));
                out.push(Slot::Pair(q));
                q += 1;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Brownian(usize),
    Pair(usize),
}

/// All words `α ∈ {1,2}^*` with `Σ α_i = n`, in lexicographic order.
pub fn ito_words(n: usize) -> Vec<ItoWord> {
    fn rec(rem: usize, cur: &mut Vec<u8>, out: &mut Vec<ItoWord>) {
        if rem == 0 {
            out.push(ItoWord(cur.clone()));
            return;
        }
        for a in [1u8, 2] {
            if a as usize <= rem {
                cur.push(a);
                rec(rem - a as usize, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, &mut Vec::new(), &mut out);
    }
    out
}

/// A polynomial with rational coefficients; each monomial is an exponent
/// vector over a fixed list of variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, Rational64>,
}

impl Polynomial {
    pub fn constant(nvars: usize, c: Rational64) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(vec![0; nvars], c);
        }
        Polynomial { nvars, terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let c = *c.numer() as f64 / *c.denom() as f64;
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn add_term(&mut self, e: Vec<u32>, c: Rational64) {
        let entry = self.terms.entry(e).or_insert_with(Rational64::zero);
        *entry += c;
        self.terms.retain(|_, c| !c.is_zero());
    }

    /// `∫_{lo}^{hi} p dv` where the bounds are variables (or `None` for 0).
    fn integrate(&self, v: usize, lo: Option<usize>, hi: usize) -> Polynomial {
        let mut out = Polynomial {
            nvars: self.nvars,
            terms: BTreeMap::new(),
        };
        for (e, c) in &self.terms {
            let k = e[v];
            let c = *c / Rational64::from_integer(k as i64 + 1);
            let mut base = e.clone();
            base[v] = 0;
            let mut up = base.clone();
            up[hi] += k + 1;
            out.add_term(up, c);
            if let Some(lo) = lo {
                let mut dn = base;
                dn[lo] += k + 1;
                out.add_term(dn, -c);
            }
        }
        out
    }
}

/// `f_α(s, t)`: the volume of the `2`-letter time variables over the ordered
/// simplex with the `1`-letter times `s_1 < … < s_p` held fixed, computed by
/// exact iterated integration. Variables are `(s_1, …, s_p, t)`.
pub fn f_alpha(alpha: &ItoWord) -> Polynomial {
    let letters = alpha.letters();
    let len = letters.len();
    // variables: one per letter, then t
    let nv = len + 1;
    let mut poly = Polynomial::constant(nv, Rational64::one());
    let mut last_retained: Option<usize> = None;
    for (i, &a) in letters.iter().enumerate() {
        if a == 1 {
            last_retained = Some(i);
            continue;
        }
        let hi = if i + 1 < len { i + 1 } else { len };
        poly = poly.integrate(i, last_retained, hi);
    }
    // keep retained letters and t
    let keep: Vec<usize> = (0..len)
        .filter(|&i| letters[i] == 1)
        .chain(std::iter::once(len))
        .collect();
    let mut out = Polynomial {
        nvars: keep.len(),
        terms: BTreeMap::new(),
    };
    for (e, c) in poly.terms {
        debug_assert!((0..len).all(|i| letters[i] == 1 || e[i] == 0));
        out.add_term(keep.iter().map(|&i| e[i]).collect(), c);
    }
    out
}

/// A permutation `τ` of tensor slots moving the Brownian slots of `α` to the
/// front (in order) and each contracted pair into a block at the rear.
/// `τ(natural position) = arranged position`.
pub fn canonical_tau(alpha: &ItoWord) -> Permutation {
    let slots = alpha.pair_index_slots();
    let p = alpha.p();
    let mut seen_pair = vec![0usize; alpha.q()];
    let images = slots
        .iter()
        .map(|s| match *s {
            Slot::Brownian(r) => r,
            Slot::Pair(q) => {
                let pos = p + 2 * q + seen_pair[q];
                seen_pair[q] += 1;
                pos
            }
        })
        .collect();
    Permutation::new(images).expect("slot arrangement is a bijection")
}

/// Whether `τ` is an admissible arrangement for `α`: Brownian slots keep
/// their order at the front, and each pair lands on one rear block.
pub fn is_admissible_tau(alpha: &ItoWord, tau: &Permutation) -> bool {
    let slots = alpha.pair_index_slots();
    if tau.len() != slots.len() {
        return false;
    }
    let p = alpha.p();
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); alpha.q()];
    for (pos, s) in slots.iter().enumerate() {
        let img = tau.apply(pos);
        match *s {
            Slot::Brownian(r) => {
                if img != r {
                    return false;
                }
            }
            Slot::Pair(q) => {
                if img < p {
                    return false;
                }
                blocks[q].push((img - p) / 2);
            }
        }
    }
    blocks.iter().all(|b| b.len() == 2 && b[0] == b[1])
}

/// The slot permutation acting on the arranged tensor: `σ'(i) = τ(σ(i))`.
pub fn arranged_sigma(sigma: &Permutation, tau: &Permutation) -> Result<Permutation> {
    if sigma.len() != tau.len() {
        return Err(NilError::InvalidParameter(
            "σ and τ have different lengths".into(),
        ));
    }
    Ok(tau.compose(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_of_order_four() {
        let w: Vec<Vec<u8>> = ito_words(4).into_iter().map(|w| w.0).collect();
        assert_eq!(
            w,
            vec![
                vec![1, 1, 1, 1],
                vec![1, 1, 2],
                vec![1, 2, 1],
                vec![2, 1, 1],
                vec![2, 2]
            ]
        );
    }

    #[test]
    fn canonical_tau_is_admissible() {
        for n in 1..6 {
            for a in ito_words(n) {
                assert!(is_admissible_tau(&a, &canonical_tau(&a)), "{a:?}");
            }
        }
        let a = ItoWord(vec![2, 1]);
        assert_eq!(canonical_tau(&a).images(), &[1, 2, 0]);
    }
}
