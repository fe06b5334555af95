//! Efficient hedging frontiers for a short European call.
//!
//! Simulates daily Heston (or GBM) price paths, trains neural delta-hedging
//! policies against the entropic risk of the termination loss under
//! proportional trading costs, restricts rebalancing to days with large price
//! moves (optionally also to days a random forest does not flag as local
//! extrema), and sweeps the move threshold to trace cost-risk frontiers
//! against a Black-Scholes delta hedge.

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsm;
pub mod error;
pub mod forest;
pub mod frontier;
pub mod hedging;
pub mod market_sim;
pub mod nn;
pub mod stats;

pub use bsm::{bs_call_price, bs_delta, bsm_hedge_baseline, ContractSpec, Payoff};
pub use error::{Error, Result};
pub use forest::{Forest, ForestConfig, LabelMatrix, LabelRule};
pub use frontier::{ConfigTag, FrontierPoint, SweepConfig, SweepMode};
pub use hedging::{
    Architecture, CostModel, DeltaPolicy, HedgeEpisodeResult, PolicyConfig, RiskConfig, TradeMask, TrainConfig,
};
pub use market_sim::{GbmParams, HestonParams, PathSet, SimConfig};
