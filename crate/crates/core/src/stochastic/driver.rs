//! Discretized Brownian drivers on `g_CM`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NilError, Result};

/// Increments of a Brownian motion with identity covariance on `ℝ^{m+N}`
/// over a partition `0 = t_0 < … < t_S = t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianDriver {
    m: usize,
    dim: usize,
    times: Vec<f64>,
    /// Row-major `S × dim`.
    increments: Vec<f64>,
}

impl BrownianDriver {
    pub fn from_increments(
        m: usize,
        dim: usize,
        times: Vec<f64>,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NilError::InvalidParameter(
                "partition must start at 0 and increase strictly".into(),
            ));
        }
        if increments.len() != (times.len() - 1) * dim || m > dim {
            return Err(NilError::Dimension {
                expected: (times.len() - 1) * dim,
                found: increments.len(),
            });
        }
        Ok(BrownianDriver {
            m,
            dim,
            times,
            increments,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty partition")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn increments(&self) -> impl Iterator<Item = &[f64]> {
        self.increments.chunks(self.dim)
    }

    /// `B_t`, the sum of all increments.
    pub fn endpoint(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for inc in self.increments() {
            for (o, x) in out.iter_mut().zip(inc) {
                *o += x;
            }
        }
        out
    }

    /// Drops the `W` coordinates beyond `ell`, giving a driver for the
    /// truncated algebra with `ell` directions.
    pub fn restrict(&self, ell: usize) -> Result<BrownianDriver> {
        if ell > self.m {
            return Err(NilError::InvalidParameter(format!(
                "cannot restrict to {ell} > m = {}",
                self.m
            )));
        }
        let nd = self.dim - self.m + ell;
        let mut inc = Vec::with_capacity(self.steps() * nd);
        for row in self.increments() {
            inc.extend_from_slice(&row[..ell]);
            inc.extend_from_slice(&row[self.m..]);
        }
        BrownianDriver::from_increments(ell, nd, self.times.clone(), inc)
    }
}

/// Samples a driver with a uniform partition of `[0, t]` into `steps`
/// pieces, using the ChaCha stream `stream` of `seed`.
pub fn sample_driver(
    m: usize,
    n: usize,
    t: f64,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<BrownianDriver> {
    if !(t > 0.0) || steps == 0 {
        return Err(NilError::InvalidParameter(
            "need t > 0 and steps ≥ 1".into(),
        ));
    }
    let dim = m + n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let increments = (0..steps * dim)
        .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let times = (0..=steps)
        .map(|j| if j == steps { t } else { j as f64 * dt })
        .collect();
    BrownianDriver::from_increments(m, dim, times, increments)
}

/// Zeroes the `W` coordinates with index `≥ ell` (the projection `π_ℓ`).
pub fn project_driver(driver: &BrownianDriver, ell: usize) -> Result<BrownianDriver> {
    if ell > driver.m {
        return Err(NilError::InvalidParameter(format!(
            "projection rank {ell} exceeds m = {}",
            driver.m
        )));
    }
    let mut d = driver.clone();
    for row in d.increments.chunks_mut(d.dim) {
        for x in &mut row[ell..d.m] {
            *x = 0.0;
        }
    }
    Ok(d)
}
