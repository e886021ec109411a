//! Monte Carlo over the heat kernel measure: cylinder test functions, their
//! Cameron–Martin gradients, and statistical checks of inversion
//! invariance, the log-Sobolev inequality, quasi-invariance and
//! finite-rank approximation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{Element, ExtensionSpec};
use crate::error::{NilError, Result};
use crate::geometry::{distance_bounds, ricci_form, GroupLaw};
use crate::stochastic::{
    project_driver, rollout_path, sample_driver, simulate_endpoints, SimConfig,
};

/// Sigma multiple used by every one-sided and two-sided verdict.
pub const SIGMA_MARGIN: f64 = 3.0;
/// Length evaluations spent refining the distance upper bound.
pub const DISTANCE_BUDGET: usize = 400;

/// `c(x) = x/(eˣ − 1)`, `c(0) = 1`.
pub fn c_function(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x / 2.0 + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// `2(1 − e^{−Kt})/K`, tending to `2t` as `K → 0`.
pub fn log_sobolev_coefficient(k: f64, t: f64) -> f64 {
    let x = k * t;
    if x.abs() < 1e-6 {
        2.0 * t * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        2.0 * (-(-x).exp_m1()) / k
    }
}

/// Compensated running sum (Neumaier's variant of Kahan summation).
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and standard error (`sd/√n`) with compensated sums, in input order.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = Kahan::default();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.sum() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut v = Kahan::default();
    xs.iter().for_each(|&x| v.add((x - mean) * (x - mean)));
    (mean, (v.sum() / (n - 1.0)).sqrt() / n.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    /// `(coordinate, power)` pairs.
    pub powers: Vec<(usize, u32)>,
}

/// A polynomial in the `m + N` coordinates, optionally post-composed with
/// `tanh` to make it bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderPolynomial {
    pub dim: usize,
    pub terms: Vec<Monomial>,
    pub bounded: bool,
}

impl CylinderPolynomial {
    pub fn new(dim: usize) -> Self {
        CylinderPolynomial {
            dim,
            terms: Vec::new(),
            bounded: false,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        CylinderPolynomial::new(dim).term(c, &[])
    }

    pub fn linear(coeffs: &[f64]) -> Self {
        coeffs
            .iter()
            .enumerate()
            .fold(CylinderPolynomial::new(coeffs.len()), |p, (i, &c)| {
                if c == 0.0 {
                    p
                } else {
                    p.term(c, &[(i, 1)])
                }
            })
    }

    pub fn term(mut self, coeff: f64, powers: &[(usize, u32)]) -> Self {
        assert!(
            powers.iter().all(|&(i, _)| i < self.dim),
            "monomial coordinate out of range"
        );
        self.terms.push(Monomial {
            coeff,
            powers: powers.to_vec(),
        });
        self
    }

    pub fn bounded(mut self) -> Self {
        self.bounded = true;
        self
    }

    fn poly(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .fold(t.coeff, |acc, &(i, p)| acc * x[i].powi(p as i32))
            })
            .sum()
    }

    fn poly_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for t in &self.terms {
            for (k, &(i, p)) in t.powers.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let mut v = t.coeff * p as f64 * x[i].powi(p as i32 - 1);
                for (l, &(j, q)) in t.powers.iter().enumerate() {
                    if l != k {
                        v *= x[j].powi(q as i32);
                    }
                }
                g[i] += v;
            }
        }
        g
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = self.poly(x);
        if self.bounded {
            p.tanh()
        } else {
            p
        }
    }

    /// Euclidean gradient in coordinates.
    pub fn coordinate_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.poly_grad(x);
        if self.bounded {
            let th = self.poly(x).tanh();
            let s = 1.0 - th * th;
            g.iter_mut().for_each(|v| *v *= s);
        }
        g
    }
}

/// `⟨∇f(g), h_i⟩ = f′(g)(L_{g*} h_i)` for every basis vector `h_i`.
pub fn gradient_raw(law: &GroupLaw, f: &CylinderPolynomial, g: &[f64]) -> Vec<f64> {
    let d = g.len();
    let df = f.coordinate_gradient(g);
    let zero = vec![0.0; d];
    let mut e = vec![0.0; d];
    (0..d)
        .map(|i| {
            e[i] = 1.0;
            let j = law.pushforward_raw(g, &zero, &e);
            e[i] = 0.0;
            df.iter().zip(&j).map(|(a, b)| a * b).sum()
        })
        .collect()
}

pub fn gradient(spec: &ExtensionSpec, f: &CylinderPolynomial, g: &Element) -> Result<Element> {
    spec.check_element(g)?;
    if f.dim != spec.dim() {
        return Err(NilError::Dimension {
            expected: spec.dim(),
            found: f.dim,
        });
    }
    Element::from_coords(spec.m(), gradient_raw(&GroupLaw::new(spec), f, g.coords()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Three-way verdict for the claim `lhs ≤ rhs`.
    pub fn one_sided(lhs: f64, rhs: f64, sigma: f64, margin: f64) -> Verdict {
        let gap = rhs - lhs;
        if gap >= margin * sigma {
            Verdict::Pass
        } else if -gap > margin * sigma {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    /// Verdict for the claim `lhs = rhs`.
    pub fn two_sided(lhs: f64, rhs: f64, sigma: f64, margin: f64) -> Verdict {
        if (lhs - rhs).abs() <= margin * sigma {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Worst of a list: any failure fails, then any inconclusive.
    pub fn combine<I: IntoIterator<Item = Verdict>>(vs: I) -> Verdict {
        let mut out = Verdict::Pass;
        for v in vs {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Pass => {}
            }
        }
        out
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One `lhs` versus `rhs` comparison with the standard error of `rhs − lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub sigma: f64,
    /// `(rhs − lhs)/sigma`; for equality checks `|lhs − rhs|/sigma`.
    pub margin_sigma: f64,
    pub verdict: Verdict,
}

impl Comparison {
    fn one_sided(label: String, lhs: f64, rhs: f64, sigma: f64) -> Self {
        Comparison {
            margin_sigma: ratio(rhs - lhs, sigma),
            verdict: Verdict::one_sided(lhs, rhs, sigma, SIGMA_MARGIN),
            label,
            lhs,
            rhs,
            sigma,
        }
    }

    fn two_sided(label: String, lhs: f64, rhs: f64, sigma: f64) -> Self {
        Comparison {
            margin_sigma: ratio((lhs - rhs).abs(), sigma),
            verdict: Verdict::two_sided(lhs, rhs, sigma, SIGMA_MARGIN),
            label,
            lhs,
            rhs,
            sigma,
        }
    }
}

fn ratio(a: f64, s: f64) -> f64 {
    if s > 0.0 {
        a / s
    } else if a == 0.0 {
        0.0
    } else {
        a.signum() * f64::MAX
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub test: String,
    pub trials: usize,
    pub seed: u64,
    pub config: SimConfig,
    pub comparisons: Vec<Comparison>,
    /// Named scalars specific to the test (constants, raw estimates).
    pub details: BTreeMap<String, f64>,
    pub verdict: Verdict,
    /// Smallest `margin_sigma` over the comparisons.
    pub margin_sigma: f64,
}

impl MCReport {
    fn new(
        test: &str,
        config: &SimConfig,
        comparisons: Vec<Comparison>,
        details: BTreeMap<String, f64>,
    ) -> Self {
        let verdict = Verdict::combine(comparisons.iter().map(|c| c.verdict));
        let margin_sigma = comparisons
            .iter()
            .map(|c| c.margin_sigma)
            .fold(f64::INFINITY, f64::min);
        MCReport {
            test: test.into(),
            trials: config.trials,
            seed: config.seed,
            config: config.clone(),
            comparisons,
            details,
            verdict,
            margin_sigma: if margin_sigma.is_finite() {
                margin_sigma
            } else {
                0.0
            },
        }
    }
}

fn check_suite(spec: &ExtensionSpec, suite: &[CylinderPolynomial]) -> Result<()> {
    if suite.is_empty() {
        return Err(NilError::InvalidParameter(
            "empty test-function suite".into(),
        ));
    }
    for f in suite {
        if f.dim != spec.dim() {
            return Err(NilError::Dimension {
                expected: spec.dim(),
                found: f.dim,
            });
        }
    }
    Ok(())
}

fn check_trials(config: &SimConfig) -> Result<()> {
    if config.trials < 2 {
        return Err(NilError::InvalidParameter("need at least 2 trials".into()));
    }
    Ok(())
}

/// Per-sample rows `k(g_i)`, computed in parallel and returned in trial
/// order, then transposed to columns.
fn columns<F>(samples: &[Element], width: usize, k: F) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let rows: Vec<Vec<f64>> = samples.par_iter().map(|g| k(g.coords())).collect();
    (0..width)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect()
}

/// Plug-in mean and standard error of `f(g_t)`.
pub fn estimate_expectation(
    spec: &ExtensionSpec,
    f: &CylinderPolynomial,
    config: &SimConfig,
) -> Result<MCReport> {
    check_suite(spec, std::slice::from_ref(f))?;
    check_trials(config)?;
    let samples = simulate_endpoints(spec, config)?;
    let col = columns(&samples, 1, |g| vec![f.eval(g)]);
    let (mean, se) = mean_stderr(&col[0]);
    let details = BTreeMap::from([("mean".into(), mean), ("stderr".into(), se)]);
    Ok(MCReport::new("expectation", config, Vec::new(), details))
}

/// Paired test of `E f(g_t) = E f(g_t⁻¹)` on shared samples (`g⁻¹ = −g`).
/// With `shift = Some(h)` the samples are replaced by `h·g_t`, which
/// breaks the symmetry and serves as a negative control.
pub fn inversion_invariance_test(
    spec: &ExtensionSpec,
    suite: &[CylinderPolynomial],
    config: &SimConfig,
    shift: Option<&Element>,
) -> Result<MCReport> {
    check_suite(spec, suite)?;
    check_trials(config)?;
    let law = GroupLaw::new(spec);
    let mut samples = simulate_endpoints(spec, config)?;
    if let Some(h) = shift {
        spec.check_element(h)?;
        samples = samples
            .par_iter()
            .map(|g| law.multiply(h, g))
            .collect::<Result<_>>()?;
    }
    let k = suite.len();
    let cols = columns(&samples, 3 * k, |g| {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        suite
            .iter()
            .flat_map(|f| {
                let (a, b) = (f.eval(g), f.eval(&neg));
                [a, b, a - b]
            })
            .collect()
    });
    let comparisons = (0..k)
        .map(|i| {
            let (a, _) = mean_stderr(&cols[3 * i]);
            let (b, _) = mean_stderr(&cols[3 * i + 1]);
            let (_, s) = mean_stderr(&cols[3 * i + 2]);
            Comparison::two_sided(format!("f{i}"), a, b, s)
        })
        .collect();
    let mut details = BTreeMap::new();
    details.insert("shifted".into(), if shift.is_some() { 1.0 } else { 0.0 });
    Ok(MCReport::new("inversion", config, comparisons, details))
}

/// `Ent(f²) ≤ 2((1 − e^{−Kt})/K) E‖∇f‖²` with `K` the Ricci lower bound
/// of the spec, per function in the suite.
pub fn log_sobolev_test(
    spec: &ExtensionSpec,
    suite: &[CylinderPolynomial],
    config: &SimConfig,
) -> Result<MCReport> {
    check_suite(spec, suite)?;
    check_trials(config)?;
    let k_ricci = ricci_form(spec).k_p;
    let coef = log_sobolev_coefficient(k_ricci, config.t);
    let law = GroupLaw::new(spec);
    let samples = simulate_endpoints(spec, config)?;
    let n = suite.len();
    let cols = columns(&samples, 3 * n, |g| {
        suite
            .iter()
            .flat_map(|f| {
                let y = f.eval(g).powi(2);
                let ylny = if y > 0.0 { y * y.ln() } else { 0.0 };
                let grad: f64 = gradient_raw(&law, f, g).iter().map(|x| x * x).sum();
                [ylny, y, grad]
            })
            .collect()
    });
    let mut details = BTreeMap::from([
        ("k".to_string(), k_ricci),
        ("coefficient".to_string(), coef),
    ]);
    let comparisons = (0..n)
        .map(|i| {
            let (a, _) = mean_stderr(&cols[3 * i]);
            let (b, _) = mean_stderr(&cols[3 * i + 1]);
            let (c, _) = mean_stderr(&cols[3 * i + 2]);
            let (ent, sigma) = if b > 0.0 {
                let lb = b.ln();
                let psi: Vec<f64> = (0..cols[0].len())
                    .map(|j| {
                        coef * cols[3 * i + 2][j] - cols[3 * i][j] + (lb + 1.0) * cols[3 * i + 1][j]
                    })
                    .collect();
                ((a - b * lb).max(0.0), mean_stderr(&psi).1)
            } else {
                (0.0, 0.0)
            };
            details.insert(format!("f{i}.entropy"), ent);
            details.insert(format!("f{i}.energy"), c);
            Comparison::one_sided(format!("f{i}"), ent, coef * c, sigma)
        })
        .collect();
    Ok(MCReport::new("logsob", config, comparisons, details))
}

/// Hölder consequence of quasi-invariance, for left and right
/// translation by `h`:
/// `E f(h·g_t) ≤ exp(c(Kt)(p−1)d²/(2t)) (E f(g_t)^q)^{1/q}` with `d` the
/// distance upper bound to `h`. Each suite member is squared first so the
/// tested functions are nonnegative.
pub fn quasi_invariance_test(
    spec: &ExtensionSpec,
    h: &Element,
    p: f64,
    suite: &[CylinderPolynomial],
    config: &SimConfig,
) -> Result<MCReport> {
    check_suite(spec, suite)?;
    check_trials(config)?;
    spec.check_element(h)?;
    if !(p > 1.0) || !p.is_finite() {
        return Err(NilError::InvalidParameter(
            "exponent p must exceed 1".into(),
        ));
    }
    let q = p / (p - 1.0);
    let t = config.t;
    let k_ricci = ricci_form(spec).k_p;
    let dist = distance_bounds(spec, h, DISTANCE_BUDGET)?;
    let d = dist.upper;
    let constant = (c_function(k_ricci * t) * (p - 1.0) * d * d / (2.0 * t)).exp();
    let law = GroupLaw::new(spec);
    let samples = simulate_endpoints(spec, config)?;
    let hc = h.coords();
    let n = suite.len();
    let cols = columns(&samples, 3 * n, |g| {
        let left = law.multiply_raw(hc, g);
        let right = law.multiply_raw(g, hc);
        suite
            .iter()
            .flat_map(|f| {
                [
                    f.eval(&left).powi(2),
                    f.eval(&right).powi(2),
                    f.eval(g).powi(2).powf(q),
                ]
            })
            .collect()
    });
    let mut comparisons = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (mq, _) = mean_stderr(&cols[3 * i + 2]);
        let rhs = constant * mq.powf(1.0 / q);
        let slope = if mq > 0.0 {
            constant * mq.powf(1.0 / q - 1.0) / q
        } else {
            0.0
        };
        for (side, c) in [("left", 0), ("right", 1)] {
            let (lhs, _) = mean_stderr(&cols[3 * i + c]);
            let psi: Vec<f64> = (0..cols[0].len())
                .map(|j| slope * cols[3 * i + 2][j] - cols[3 * i + c][j])
                .collect();
            let sigma = mean_stderr(&psi).1;
            comparisons.push(Comparison::one_sided(
                format!("f{i}.{side}"),
                lhs,
                rhs,
                sigma,
            ));
        }
    }
    let details = BTreeMap::from([
        ("k".to_string(), k_ricci),
        ("p".to_string(), p),
        ("distance_upper".to_string(), d),
        ("distance_lower".to_string(), dist.lower),
        ("holder_constant".to_string(), constant),
    ]);
    Ok(MCReport::new("quasi", config, comparisons, details))
}

/// `E sup_k ‖g^ℓ_{t_k} − g_{t_k}‖²` over shared drivers for each `ℓ`, where
/// `g^ℓ` is driven by the driver with `W` coordinates beyond `ℓ` zeroed.
/// Consecutive entries must decrease by more than one standard error of
/// the paired difference to pass; an increase beyond three fails.
pub fn projection_convergence_study(
    spec: &ExtensionSpec,
    ells: &[usize],
    config: &SimConfig,
) -> Result<MCReport> {
    check_trials(config)?;
    if ells.is_empty()
        || ells.windows(2).any(|w| w[0] >= w[1])
        || *ells.last().expect("nonempty") > spec.m()
    {
        return Err(NilError::InvalidParameter(
            "ranks must increase strictly and not exceed m".into(),
        ));
    }
    let law = GroupLaw::new(spec);
    let (m, nv) = (spec.m(), spec.n());
    let k = ells.len();
    let rows: Vec<Vec<f64>> = (0..config.trials)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let drv = sample_driver(m, nv, config.t, config.steps, config.seed, i as u64)?;
            let full = rollout_path(&law, &drv);
            ells.iter()
                .map(|&ell| {
                    let proj = rollout_path(&law, &project_driver(&drv, ell)?);
                    Ok(proj
                        .iter()
                        .zip(&full)
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                        .fold(0.0, f64::max))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect();
    let mut details = BTreeMap::new();
    for (c, &ell) in ells.iter().enumerate() {
        let (mean, se) = mean_stderr(&cols[c]);
        details.insert(format!("err.{ell}"), mean);
        details.insert(format!("err.{ell}.stderr"), se);
    }
    let comparisons = (1..k)
        .map(|c| {
            let (lhs, _) = mean_stderr(&cols[c]);
            let (rhs, _) = mean_stderr(&cols[c - 1]);
            let diff: Vec<f64> = cols[c - 1]
                .iter()
                .zip(&cols[c])
                .map(|(a, b)| a - b)
                .collect();
            let sigma = mean_stderr(&diff).1;
            let gap = rhs - lhs;
            let verdict = if gap > sigma {
                Verdict::Pass
            } else if -gap > SIGMA_MARGIN * sigma {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            };
            Comparison {
                label: format!("{}->{}", ells[c - 1], ells[c]),
                lhs,
                rhs,
                sigma,
                margin_sigma: ratio(gap, sigma),
                verdict,
            }
        })
        .collect();
    Ok(MCReport::new("convergence", config, comparisons, details))
}

fn suite_indices(spec: &ExtensionSpec) -> (usize, usize, usize) {
    let d = spec.dim();
    let w1 = 0;
    let w2 = 1.min(d - 1);
    let v1 = if spec.n() > 0 { spec.m() } else { d - 1 };
    (w1, w2, v1)
}

/// Five bounded cylinder functions of the first two `W` coordinates and
/// the first `v` coordinate; none is even.
pub fn bounded_suite(spec: &ExtensionSpec) -> Vec<CylinderPolynomial> {
    let d = spec.dim();
    let (w1, w2, v1) = suite_indices(spec);
    let p = || CylinderPolynomial::new(d);
    vec![
        p().term(1.0, &[(v1, 1)]).bounded(),
        p().term(1.0, &[(w1, 1)]).term(1.0, &[(v1, 1)]).bounded(),
        p().term(1.0, &[(w1, 1), (w2, 1)])
            .term(0.5, &[(v1, 1)])
            .bounded(),
        p().term(0.5, &[(w1, 1)])
            .term(1.0, &[(w1, 1), (v1, 1)])
            .bounded(),
        p().term(0.5, &[(v1, 2)]).term(-1.0, &[(w2, 1)]).bounded(),
    ]
}

/// Five low-degree cylinder functions for the log-Sobolev check.
pub fn log_sobolev_suite(spec: &ExtensionSpec) -> Vec<CylinderPolynomial> {
    let d = spec.dim();
    let (w1, w2, v1) = suite_indices(spec);
    let p = || CylinderPolynomial::constant(d, 1.0);
    vec![
        p().term(0.3, &[(w1, 1)]),
        p().term(0.2, &[(v1, 1)]),
        p().term(0.2, &[(w1, 1), (w2, 1)]),
        CylinderPolynomial::new(d).term(1.0, &[(v1, 1)]).bounded(),
        p().term(0.1, &[(w1, 2)]).term(0.1, &[(v1, 1)]),
    ]
}
