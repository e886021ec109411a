//! Hypoelliptic Brownian motion on the group: drivers, the exact rollout of
//! the piecewise-linear development, the signature form and the
//! iterated-Itô expansion.

pub mod coeffs;
pub mod driver;
pub mod expansion;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{Element, ExtensionSpec};
use crate::error::{NilError, Result};
use crate::geometry::GroupLaw;

pub use coeffs::{c_coefficient, canonical_tau, f_alpha, ito_words, ItoWord, Polynomial};
pub use driver::{project_driver, sample_driver, BrownianDriver};
pub use expansion::{
    f_hat_tensor, left_nested_tensor, polyline_signature, signature_eval_with,
    step3_explicit_endpoint, ExpansionPlan, ItoTerm, LieProjector,
};

/// Default number of partition steps.
pub const DEFAULT_STEPS: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Rollout,
    Expansion,
    Signature,
}

impl std::str::FromStr for Engine {
    type Err = NilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rollout" => Ok(Engine::Rollout),
            "expansion" => Ok(Engine::Expansion),
            "signature" => Ok(Engine::Signature),
            other => Err(NilError::InvalidParameter(format!(
                "unknown engine `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t: f64,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub engine: Engine,
}

impl SimConfig {
    pub fn new(t: f64, steps: usize, trials: usize, seed: u64) -> Self {
        SimConfig {
            t,
            steps,
            trials,
            seed,
            engine: Engine::Rollout,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    /// Rejects non-positive `t`, `steps` or `trials`.
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(NilError::InvalidParameter("t must be positive".into()));
        }
        if self.steps == 0 || self.trials == 0 {
            return Err(NilError::InvalidParameter(
                "steps and trials must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `g_{t_k}` for every partition time, by successive products
/// `g_{k} = g_{k-1} · ΔB_k` (exact for the piecewise-linear driver).
pub fn rollout_path(law: &GroupLaw, driver: &BrownianDriver) -> Vec<Vec<f64>> {
    let d = law.spec().dim();
    let mut path = Vec::with_capacity(driver.steps() + 1);
    let mut g = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut scratch = Vec::new();
    path.push(g.clone());
    for inc in driver.increments() {
        law.multiply_into(&g, inc, &mut next, &mut scratch);
        std::mem::swap(&mut g, &mut next);
        path.push(g.clone());
    }
    path
}

/// Endpoint of [`rollout_path`].
pub fn rollout_endpoint(law: &GroupLaw, driver: &BrownianDriver) -> Vec<f64> {
    let d = law.spec().dim();
    let mut g = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut scratch = Vec::new();
    for inc in driver.increments() {
        law.multiply_into(&g, inc, &mut next, &mut scratch);
        std::mem::swap(&mut g, &mut next);
    }
    g
}

fn check_driver(spec: &ExtensionSpec, driver: &BrownianDriver) -> Result<()> {
    if driver.dim() != spec.dim() || driver.m() != spec.m() {
        return Err(NilError::Dimension {
            expected: spec.dim(),
            found: driver.dim(),
        });
    }
    Ok(())
}

/// Rollout endpoint as an [`Element`].
pub fn rollout(spec: &ExtensionSpec, driver: &BrownianDriver) -> Result<Element> {
    check_driver(spec, driver)?;
    Element::from_coords(spec.m(), rollout_endpoint(&GroupLaw::new(spec), driver))
}

/// Signature-form endpoint as an [`Element`].
pub fn signature_eval(spec: &ExtensionSpec, driver: &BrownianDriver) -> Result<Element> {
    check_driver(spec, driver)?;
    Element::from_coords(
        spec.m(),
        signature_eval_with(&LieProjector::new(spec), driver),
    )
}

/// Iterated-Itô expansion endpoint as an [`Element`].
pub fn expansion_endpoint(spec: &ExtensionSpec, driver: &BrownianDriver) -> Result<Element> {
    check_driver(spec, driver)?;
    Element::from_coords(spec.m(), ExpansionPlan::new(spec).endpoint(driver))
}

/// Endpoint evaluator with the per-spec precomputation done once.
#[derive(Clone, Debug)]
pub enum Simulator {
    Rollout(GroupLaw),
    Expansion(ExpansionPlan),
    Signature(LieProjector),
}

impl Simulator {
    pub fn new(spec: &ExtensionSpec, engine: Engine) -> Self {
        match engine {
            Engine::Rollout => Simulator::Rollout(GroupLaw::new(spec)),
            Engine::Expansion => Simulator::Expansion(ExpansionPlan::new(spec)),
            Engine::Signature => Simulator::Signature(LieProjector::new(spec)),
        }
    }

    pub fn endpoint(&self, driver: &BrownianDriver) -> Vec<f64> {
        match self {
            Simulator::Rollout(law) => rollout_endpoint(law, driver),
            Simulator::Expansion(plan) => plan.endpoint(driver),
            Simulator::Signature(proj) => signature_eval_with(proj, driver),
        }
    }
}

/// Endpoints of `config.trials` independent runs, in trial order. Trial `i`
/// uses stream `i` of `config.seed`, so results do not depend on the number
/// of worker threads.
pub fn simulate_endpoints(spec: &ExtensionSpec, config: &SimConfig) -> Result<Vec<Element>> {
    let sim = Simulator::new(spec, config.engine);
    simulate_trials(spec, &sim, config, 0..config.trials)
}

/// Endpoints for the trials in `range` only; concatenating consecutive
/// ranges reproduces [`simulate_endpoints`].
pub fn simulate_trials(
    spec: &ExtensionSpec,
    sim: &Simulator,
    config: &SimConfig,
    range: Range<usize>,
) -> Result<Vec<Element>> {
    config.validate()?;
    let (m, n) = (spec.m(), spec.n());
    range
        .into_par_iter()
        .map(|i| {
            let driver = sample_driver(m, n, config.t, config.steps, config.seed, i as u64)?;
            Element::from_coords(m, sim.endpoint(&driver))
        })
        .collect()
}
