//! Daily-resolution price path generation.
//!
//! Two models are provided:
//!
//! * geometric Brownian motion, stepped exactly in log space;
//! * Heston stochastic volatility, stepped with the full-truncation Euler
//!   scheme for the variance and log-Euler for the price.
//!
//! Every path draws from its own ChaCha stream seeded with `seed ^ path_index`,
//! so a path is reproducible regardless of how the batch is split across
//! workers. Price shocks and variance shocks come from two separate streams of
//! the same seed, which makes a Heston run with constant variance reproduce the
//! GBM run with the same seed.

mod io;

pub use io::{read_pathset, write_pathset, write_pathset_csv, PATHSET_MAGIC, PATHSET_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default step length: one calendar day.
pub const DAILY_DT: f64 = 1.0 / 365.0;

const PRICE_STREAM: u64 = 0;
const VARIANCE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    /// Drift per year.
    pub mu: f64,
    /// Volatility per square-root year.
    pub sigma: f64,
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config(format!("invalid GBM parameters {self:?}")));
        }
        Ok(())
    }
}

/// Heston model parameters. The Feller condition is deliberately not
/// required: the scenario presets violate it by a wide margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Initial variance per year.
    pub v0: f64,
    /// Long-run variance per year.
    pub theta: f64,
    /// Mean-reversion speed per year.
    pub kappa: f64,
    /// Price drift per year.
    pub mu: f64,
    /// Volatility of variance.
    pub sigma_v: f64,
    /// Correlation between the price and variance shocks.
    pub rho: f64,
}

impl HestonParams {
    /// Low-volatility market scenario.
    pub fn low_vol() -> Self {
        Self { v0: 0.4, theta: 0.4, kappa: 1.0, mu: 0.01, sigma_v: 4.0, rho: -0.7 }
    }

    /// High-volatility market scenario.
    pub fn high_vol() -> Self {
        Self { v0: 0.8, theta: 0.8, ..Self::low_vol() }
    }

    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa * self.theta >= self.sigma_v * self.sigma_v
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite =
            [self.v0, self.theta, self.kappa, self.mu, self.sigma_v, self.rho].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::config("Heston parameters must be finite"));
        }
        if self.v0 < 0.0 || self.theta < 0.0 {
            return Err(Error::config("v0 and theta must be non-negative"));
        }
        if self.kappa <= 0.0 {
            return Err(Error::config("kappa must be positive"));
        }
        if self.sigma_v < 0.0 {
            return Err(Error::config("sigma_v must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [-1, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub s0: f64,
    pub n_steps: usize,
    /// Year fraction per step.
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { s0: 100.0, n_steps: 30, dt: DAILY_DT, n_paths: 1, seed: 0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::config("s0 must be positive"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt must be positive"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be at least 1"));
        }
        Ok(())
    }

    pub fn maturity(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Simulated price trajectories, row-major `[n_paths × (n_steps + 1)]`.
///
/// Each row carries the global index of the path it was generated from, so
/// subsets taken with [`PathSet::split_at`] keep their identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    n_steps: usize,
    s0: f64,
    dt: f64,
    seed: u64,
    ids: Vec<u64>,
    prices: Vec<f64>,
    variances: Option<Vec<f64>>,
}

impl PathSet {
    /// Builds a path set from explicit rows, checking the invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>, variances: Option<Vec<Vec<f64>>>, dt: f64, seed: u64) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::shape("path set needs at least one path"))?;
        if first.len() < 2 {
            return Err(Error::shape("a path needs at least two prices"));
        }
        let width = first.len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("ragged price rows"));
        }
        let ids = (0..rows.len() as u64).collect();
        let variances = match variances {
            Some(v) => {
                if v.len() != rows.len() || v.iter().any(|r| r.len() != width) {
                    return Err(Error::shape("variance rows do not match price rows"));
                }
                Some(v.concat())
            }
            None => None,
        };
        Self::from_parts(width - 1, first[0], dt, seed, ids, rows.concat(), variances)
    }

    pub(crate) fn from_parts(
        n_steps: usize,
        s0: f64,
        dt: f64,
        seed: u64,
        ids: Vec<u64>,
        prices: Vec<f64>,
        variances: Option<Vec<f64>>,
    ) -> Result<Self> {
        let width = n_steps + 1;
        if prices.len() != ids.len() * width {
            return Err(Error::shape("price buffer does not match path count"));
        }
        if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::domain("prices must be finite and positive"));
        }
        if prices.chunks(width).any(|row| row[0] != s0) {
            return Err(Error::domain("every path must start at s0"));
        }
        if let Some(v) = &variances {
            if v.len() != prices.len() {
                return Err(Error::shape("variance buffer does not match prices"));
            }
            if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::domain("variances must be finite and non-negative"));
            }
        }
        Ok(Self { n_steps, s0, dt, seed, ids, prices, variances })
    }

    pub fn n_paths(&self) -> usize {
        self.ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Global path indices of the rows.
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn variances(&self) -> Option<&[f64]> {
        self.variances.as_deref()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.prices[i * w..(i + 1) * w]
    }

    pub fn variance_path(&self, i: usize) -> Option<&[f64]> {
        let w = self.n_steps + 1;
        self.variances.as_ref().map(|v| &v[i * w..(i + 1) * w])
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.prices.chunks(self.n_steps + 1)
    }

    /// Splits into the first `n` rows and the remainder.
    pub fn split_at(&self, n: usize) -> Result<(PathSet, PathSet)> {
        if n == 0 || n >= self.n_paths() {
            return Err(Error::config(format!("cannot split {} paths at {n}", self.n_paths())));
        }
        Ok((self.select(0..n), self.select(n..self.n_paths())))
    }

    /// Copies a contiguous range of rows.
    pub fn select(&self, range: std::ops::Range<usize>) -> PathSet {
        let w = self.n_steps + 1;
        let cells = range.start * w..range.end * w;
        PathSet {
            n_steps: self.n_steps,
            s0: self.s0,
            dt: self.dt,
            seed: self.seed,
            ids: self.ids[range].to_vec(),
            prices: self.prices[cells.clone()].to_vec(),
            variances: self.variances.as_ref().map(|v| v[cells].to_vec()),
        }
    }

    /// True when no path id appears in both sets.
    pub fn is_disjoint_from(&self, other: &PathSet) -> bool {
        let mine: std::collections::HashSet<u64> = self.ids.iter().copied().collect();
        other.ids.iter().all(|id| !mine.contains(id))
    }
}

fn path_rng(seed: u64, path: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ path);
    rng.set_stream(stream);
    rng
}

/// Generates GBM paths with the exact log-Euler step
/// `S' = S·exp((μ − σ²/2)·dt + σ·√dt·Z)`.
pub fn simulate_gbm(params: &GbmParams, cfg: &SimConfig) -> Result<PathSet> {
    params.validate()?;
    cfg.validate()?;
    let width = cfg.n_steps + 1;
    let drift = (params.mu - 0.5 * params.sigma * params.sigma) * cfg.dt;
    let diffusion = params.sigma * cfg.dt.sqrt();
    let mut prices = vec![0.0; cfg.n_paths * width];
    prices.par_chunks_mut(width).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(cfg.seed, i as u64, PRICE_STREAM);
        row[0] = cfg.s0;
        for t in 0..cfg.n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            row[t + 1] = row[t] * (drift + diffusion * z).exp();
        }
    });
    let ids = (0..cfg.n_paths as u64).collect();
    PathSet::from_parts(cfg.n_steps, cfg.s0, cfg.dt, cfg.seed, ids, prices, None)
}

/// Generates Heston paths with full-truncation Euler for the variance:
///
/// ```text
/// v⁺   = max(v, 0)
/// S'   = S·exp((μ − v⁺/2)·dt + √(v⁺·dt)·Z₁)
/// v'   = v + κ(θ − v⁺)·dt + σ_v·√(v⁺·dt)·Z₂,   Z₂ = ρZ₁ + √(1−ρ²)·Z⊥
/// ```
///
/// The recursion carries the raw (possibly negative) variance; the stored
/// variance is the truncated value.
pub fn simulate_heston(params: &HestonParams, cfg: &SimConfig) -> Result<PathSet> {
    params.validate()?;
    cfg.validate()?;
    let width = cfg.n_steps + 1;
    let dt = cfg.dt;
    let rho_perp = (1.0 - params.rho * params.rho).max(0.0).sqrt();
    let mut prices = vec![0.0; cfg.n_paths * width];
    let mut variances = vec![0.0; cfg.n_paths * width];
    prices.par_chunks_mut(width).zip(variances.par_chunks_mut(width)).enumerate().for_each(|(i, (row, vrow))| {
        let mut price_rng = path_rng(cfg.seed, i as u64, PRICE_STREAM);
        let mut var_rng = path_rng(cfg.seed, i as u64, VARIANCE_STREAM);
        let mut v = params.v0;
        row[0] = cfg.s0;
        vrow[0] = v.max(0.0);
        for t in 0..cfg.n_steps {
            let z1: f64 = StandardNormal.sample(&mut price_rng);
            let zp: f64 = StandardNormal.sample(&mut var_rng);
            let z2 = params.rho * z1 + rho_perp * zp;
            let vp = v.max(0.0);
            let sd = (vp * dt).sqrt();
            row[t + 1] = row[t] * ((params.mu - 0.5 * vp) * dt + sd * z1).exp();
            v += params.kappa * (params.theta - vp) * dt + params.sigma_v * sd * z2;
            vrow[t + 1] = v.max(0.0);
        }
    });
    let ids = (0..cfg.n_paths as u64).collect();
    PathSet::from_parts(cfg.n_steps, cfg.s0, cfg.dt, cfg.seed, ids, prices, Some(variances))
}
