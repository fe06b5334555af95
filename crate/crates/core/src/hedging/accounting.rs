//! Episode accounting for a short call hedged with the underlying.
//!
//! With δ₋₁ = 0 and no financing (zero rate):
//!
//! ```text
//! L = Σ_t δ_t·(S_{t+1} − S_t) − Σ_t rate·|δ_t − δ_{t−1}|·S_t − payoff(S_T)
//! ```
//!
//! Losses are negative numbers; the option premium is not netted in. Closing
//! the position at maturity is free unless `charge_liquidation` is set, in
//! which case `rate·|δ_{T−1}|·S_T` is also deducted.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bsm::ContractSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Proportional cost per unit of cash traded.
    pub rate: f64,
    pub charge_liquidation: bool,
}

impl CostModel {
    pub fn new(rate: f64) -> Self {
        Self { rate, charge_liquidation: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::config(format!("cost rate must be non-negative, got {}", self.rate)));
        }
        Ok(())
    }
}

/// Per-path outcome of one hedging episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeAccount {
    pub loss: f64,
    pub total_cost: f64,
    /// Days on which the holding changed.
    pub trades: u32,
}

fn check_lengths(path: &[f64], deltas: &[f64], contract: &ContractSpec) -> Result<()> {
    if deltas.len() != contract.maturity_steps || path.len() != deltas.len() + 1 {
        return Err(Error::shape(format!(
            "{} prices and {} deltas do not fit a {}-step contract",
            path.len(),
            deltas.len(),
            contract.maturity_steps
        )));
    }
    Ok(())
}

/// Per-path outcomes over a whole path set, in path order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HedgeEpisodeResult {
    pub losses: Vec<f64>,
    pub trade_counts: Vec<u32>,
    pub total_costs: Vec<f64>,
}

impl HedgeEpisodeResult {
    pub fn from_accounts(accounts: &[EpisodeAccount]) -> Self {
        Self {
            losses: accounts.iter().map(|a| a.loss).collect(),
            trade_counts: accounts.iter().map(|a| a.trades).collect(),
            total_costs: accounts.iter().map(|a| a.total_cost).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

pub fn settle_episode(
    path: &[f64],
    deltas: &[f64],
    contract: &ContractSpec,
    cost: &CostModel,
) -> Result<EpisodeAccount> {
    check_lengths(path, deltas, contract)?;
    let mut gain = 0.0;
    let mut traded = 0.0;
    let mut trades = 0;
    let mut prev = 0.0;
    for (t, &d) in deltas.iter().enumerate() {
        gain += d * (path[t + 1] - path[t]);
        if d != prev {
            traded += (d - prev).abs() * path[t];
            trades += 1;
        }
        prev = d;
    }
    let terminal = path[deltas.len()];
    if cost.charge_liquidation {
        traded += prev.abs() * terminal;
    }
    let total_cost = cost.rate * traded;
    Ok(EpisodeAccount { loss: gain - total_cost - contract.payoff(terminal), total_cost, trades })
}

pub fn termination_loss(path: &[f64], deltas: &[f64], contract: &ContractSpec, cost: &CostModel) -> Result<f64> {
    Ok(settle_episode(path, deltas, contract, cost)?.loss)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Partial derivatives `∂L/∂δ_t`, using sign(0) = 0 for the cost kink.
pub fn loss_gradient(path: &[f64], deltas: &[f64], contract: &ContractSpec, cost: &CostModel) -> Result<Vec<f64>> {
    check_lengths(path, deltas, contract)?;
    let n = deltas.len();
    let mut g = vec![0.0; n];
    for t in 0..n {
        let prev = if t == 0 { 0.0 } else { deltas[t - 1] };
        g[t] = path[t + 1] - path[t] - cost.rate * sign(deltas[t] - prev) * path[t];
        if t + 1 < n {
            g[t] += cost.rate * sign(deltas[t + 1] - deltas[t]) * path[t + 1];
        } else if cost.charge_liquidation {
            g[t] -= cost.rate * sign(deltas[t]) * path[t + 1];
        }
    }
    Ok(g)
}

/// One row of a per-day hedging ledger. `buy_sell` is the cash value of the
/// rebalancing trade, negative for sales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub day: usize,
    pub price: f64,
    pub delta: f64,
    pub buy_sell: f64,
    pub trading_cost: f64,
}

/// Per-day ledger for the days covered by `deltas` (prices beyond are ignored).
pub fn episode_rows(prices: &[f64], deltas: &[f64], rate: f64) -> Result<Vec<EpisodeRow>> {
    if prices.len() < deltas.len() {
        return Err(Error::shape("fewer prices than deltas"));
    }
    let mut prev = 0.0;
    Ok(deltas
        .iter()
        .zip(prices)
        .enumerate()
        .map(|(day, (&delta, &price))| {
            let buy_sell = (delta - prev) * price;
            prev = delta;
            EpisodeRow { day, price, delta, buy_sell, trading_cost: rate * buy_sell.abs() }
        })
        .collect())
}

pub fn write_episode_csv<W: Write>(rows: &[EpisodeRow], mut w: W) -> Result<()> {
    writeln!(w, "day,price,delta,buy_sell,trading_cost")?;
    for r in rows {
        writeln!(w, "{},{:.4},{:.6},{:.6},{:.6}", r.day, r.price, r.delta, r.buy_sell, r.trading_cost)?;
    }
    Ok(())
}
