//! Mini-batch Adam on the entropic risk of episode losses, and evaluation of
//! a policy over a path set.
//!
//! Batch work is split into fixed-size chunks of paths; chunk gradients are
//! summed in chunk order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accounting::{loss_gradient, settle_episode, CostModel, EpisodeAccount, HedgeEpisodeResult};
use super::mask::{fill_mask_row, TradeMask};
use super::policy::{DeltaPolicy, EpisodeInput, EpisodeTape, PolicyConfig};
use super::risk::{entropy_risk, entropy_risk_with_weights, RiskConfig};
use crate::bsm::ContractSpec;
use crate::error::{Error, Result};
use crate::forest::LabelMatrix;
use crate::market_sim::PathSet;
use crate::nn::{grad_check, AdamConfig, AdamState, GradCheckReport, Gradient, Parameterized};
use crate::stats::{mean, std_dev};

/// Paths per unit of parallel work.
const CHUNK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Share of the training paths held out for model selection.
    pub validation_fraction: f64,
    /// How many thresholds of a sampled schedule enter the validation objective.
    pub validation_alphas: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1000,
            adam: AdamConfig::default(),
            validation_fraction: 0.1,
            validation_alphas: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation fraction must lie in [0, 1)"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Threshold used to build training masks.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSchedule {
    Fixed(f64),
    /// A threshold drawn uniformly from the pool for every mini-batch.
    Sampled(Vec<f64>),
}

impl AlphaSchedule {
    fn validate(&self) -> Result<()> {
        let pool: &[f64] = match self {
            AlphaSchedule::Fixed(a) => std::slice::from_ref(a),
            AlphaSchedule::Sampled(p) => p,
        };
        if pool.is_empty() || pool.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::config("alpha schedule needs non-negative thresholds"));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            AlphaSchedule::Fixed(a) => *a,
            AlphaSchedule::Sampled(p) => p[rng.random_range(0..p.len())],
        }
    }

    /// Up to `k` evenly spaced members of the pool.
    fn validation_set(&self, k: usize) -> Vec<f64> {
        match self {
            AlphaSchedule::Fixed(a) => vec![*a],
            AlphaSchedule::Sampled(p) => {
                let k = k.clamp(1, p.len());
                if k == 1 {
                    return vec![p[0]];
                }
                (0..k).map(|j| p[(j * (p.len() - 1) + (k - 1) / 2) / (k - 1)]).collect()
            }
        }
    }
}

/// How training masks are built for each path.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSource {
    pub alphas: AlphaSchedule,
    /// Forecast labels aligned with the training paths.
    pub labels: Option<LabelMatrix>,
    /// Close the days labelled 0.
    pub gate_with_labels: bool,
}

impl MaskSource {
    pub fn threshold(alpha: f64) -> Self {
        Self { alphas: AlphaSchedule::Fixed(alpha), labels: None, gate_with_labels: false }
    }

    pub fn sampled(pool: Vec<f64>) -> Self {
        Self { alphas: AlphaSchedule::Sampled(pool), labels: None, gate_with_labels: false }
    }

    pub fn with_labels(mut self, labels: LabelMatrix, gate: bool) -> Self {
        self.labels = Some(labels);
        self.gate_with_labels = gate;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch objective over the epoch; the validation value at epoch 0.
    pub train_objective: f64,
    pub validation_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: DeltaPolicy,
    pub log: TrainingLog,
}

/// Summary of a policy run over a path set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub result: HedgeEpisodeResult,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub avg_trades: f64,
    pub avg_cost: f64,
}

fn check_contract(paths: &PathSet, contract: &ContractSpec) -> Result<()> {
    contract.validate()?;
    if contract.maturity_steps != paths.n_steps() {
        return Err(Error::shape(format!(
            "contract has {} steps but paths have {}",
            contract.maturity_steps,
            paths.n_steps()
        )));
    }
    Ok(())
}

fn check_labels(labels: Option<&LabelMatrix>, paths: &PathSet) -> Result<()> {
    if let Some(l) = labels {
        if l.n_paths() != paths.n_paths() || l.n_steps() != paths.n_steps() {
            return Err(Error::shape("label matrix does not match the path set"));
        }
    }
    Ok(())
}

/// Runs `policy` on every path under `mask`. `labels` are only read as an
/// input feature; any gating must already be part of `mask`.
pub fn evaluate_policy(
    paths: &PathSet,
    policy: &DeltaPolicy,
    mask: &TradeMask,
    labels: Option<&LabelMatrix>,
    contract: &ContractSpec,
    cost: &CostModel,
) -> Result<PolicyEvaluation> {
    check_contract(paths, contract)?;
    cost.validate()?;
    mask.check_against(paths)?;
    check_labels(labels, paths)?;
    let accounts: Vec<EpisodeAccount> = (0..paths.n_paths())
        .into_par_iter()
        .map(|i| {
            let input = EpisodeInput { path: paths.path(i), mask: mask.row(i), labels: labels.map(|l| l.row(i)) };
            let deltas = policy.deltas(&input)?;
            settle_episode(input.path, &deltas, contract, cost)
        })
        .collect::<Result<_>>()?;
    let result = HedgeEpisodeResult::from_accounts(&accounts);
    Ok(summarize(result))
}

fn summarize(result: HedgeEpisodeResult) -> PolicyEvaluation {
    let trades: Vec<f64> = result.trade_counts.iter().map(|&c| c as f64).collect();
    PolicyEvaluation {
        mean_loss: mean(&result.losses),
        std_loss: std_dev(&result.losses),
        avg_trades: mean(&trades),
        avg_cost: mean(&result.total_costs),
        result,
    }
}

/// Everything needed to build one episode's mask and inputs during training.
struct EpisodeSource<'a> {
    paths: &'a PathSet,
    labels: Option<&'a LabelMatrix>,
    gate: bool,
}

impl EpisodeSource<'_> {
    fn mask(&self, i: usize, alpha: f64, out: &mut [bool]) {
        fill_mask_row(self.paths.path(i), alpha, out);
        if self.gate {
            if let Some(l) = self.labels {
                for (m, &lab) in out.iter_mut().zip(l.row(i)).skip(1) {
                    *m &= lab == 1;
                }
            }
        }
    }

    fn input<'m>(&'m self, i: usize, mask: &'m [bool]) -> EpisodeInput<'m> {
        EpisodeInput { path: self.paths.path(i), mask, labels: self.labels.map(|l| l.row(i)) }
    }

    fn losses(&self, policy: &DeltaPolicy, alpha: f64, contract: &ContractSpec, cost: &CostModel) -> Result<Vec<f64>> {
        let n = self.paths.n_steps();
        (0..self.paths.n_paths())
            .into_par_iter()
            .map(|i| {
                let mut m = vec![false; n];
                self.mask(i, alpha, &mut m);
                let deltas = policy.deltas(&self.input(i, &m))?;
                Ok(settle_episode(self.paths.path(i), &deltas, contract, cost)?.loss)
            })
            .collect()
    }

    /// Entropic risk of a mini-batch and its parameter gradient.
    fn batch_step(
        &self,
        policy: &DeltaPolicy,
        batch: &[usize],
        alpha: f64,
        contract: &ContractSpec,
        cost: &CostModel,
        risk: &RiskConfig,
    ) -> Result<(f64, Gradient)> {
        let n = self.paths.n_steps();
        let recorded: Vec<(EpisodeTape, f64)> = batch
            .par_iter()
            .map(|&i| {
                let mut m = vec![false; n];
                self.mask(i, alpha, &mut m);
                let mut tape = EpisodeTape::new();
                policy.forward_record(&self.input(i, &m), &mut tape)?;
                let loss = settle_episode(self.paths.path(i), tape.deltas(), contract, cost)?.loss;
                Ok((tape, loss))
            })
            .collect::<Result<_>>()?;
        let losses: Vec<f64> = recorded.iter().map(|(_, l)| *l).collect();
        if let Some(bad) = losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss on path {}", batch[bad])));
        }
        let (rho, weights) = entropy_risk_with_weights(&losses, risk)?;

        let partials: Vec<Gradient> = batch
            .par_chunks(CHUNK)
            .zip(recorded.par_chunks(CHUNK))
            .zip(weights.par_chunks(CHUNK))
            .map(|((idx, rec), w)| {
                let mut g = policy.zero_gradient();
                for ((&i, (tape, _)), &wi) in idx.iter().zip(rec).zip(w) {
                    let mut gd = loss_gradient(self.paths.path(i), tape.deltas(), contract, cost)?;
                    gd.iter_mut().for_each(|x| *x *= wi);
                    policy.backward(tape, &gd, &mut g)?;
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let mut total = policy.zero_gradient();
        for g in &partials {
            total.add_assign(g)?;
        }
        Ok((rho, total))
    }
}

fn validation_objective(
    source: &EpisodeSource,
    policy: &DeltaPolicy,
    alphas: &[f64],
    contract: &ContractSpec,
    cost: &CostModel,
    risk: &RiskConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for &a in alphas {
        total += entropy_risk(&source.losses(policy, a, contract, cost)?, risk)?;
    }
    let v = total / alphas.len() as f64;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("validation objective is {v}")));
    }
    Ok(v)
}

/// Trains a network policy and returns the parameters with the best
/// validation objective (the initial parameters count as epoch 0).
pub fn train_policy(
    train_paths: &PathSet,
    contract: &ContractSpec,
    cost: &CostModel,
    risk: &RiskConfig,
    policy_cfg: &PolicyConfig,
    masks: &MaskSource,
    cfg: &TrainConfig,
) -> Result<TrainedPolicy> {
    check_contract(train_paths, contract)?;
    cost.validate()?;
    risk.validate()?;
    cfg.validate()?;
    masks.alphas.validate()?;
    check_labels(masks.labels.as_ref(), train_paths)?;
    if masks.gate_with_labels && masks.labels.is_none() {
        return Err(Error::config("label gating requested without labels"));
    }
    if policy_cfg.include_label && masks.labels.is_none() {
        return Err(Error::config("policy reads forecast labels but none were supplied"));
    }

    let n = train_paths.n_paths();
    let n_val =
        if cfg.validation_fraction > 0.0 { ((n as f64 * cfg.validation_fraction).round() as usize).max(1) } else { 0 };
    if n_val >= n {
        return Err(Error::config("too few training paths for the validation split"));
    }
    let (fit_paths, val_paths) = train_paths.split_at(n - n_val)?;
    let (fit_labels, val_labels) = match &masks.labels {
        Some(l) => (Some(l.select(0..n - n_val)), Some(l.select(n - n_val..n))),
        None => (None, None),
    };
    let fit = EpisodeSource { paths: &fit_paths, labels: fit_labels.as_ref(), gate: masks.gate_with_labels };
    // Without a validation split, model selection falls back to the fit set.
    let val = if n_val > 0 {
        EpisodeSource { paths: &val_paths, labels: val_labels.as_ref(), gate: masks.gate_with_labels }
    } else {
        EpisodeSource { paths: &fit_paths, labels: fit_labels.as_ref(), gate: masks.gate_with_labels }
    };
    let val_alphas = masks.alphas.validation_set(cfg.validation_alphas);

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = DeltaPolicy::new(policy_cfg, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(&policy, cfg.adam);

    let initial = validation_objective(&val, &policy, &val_alphas, contract, cost, risk)?;
    let mut log = TrainingLog {
        epochs: vec![EpochRecord { epoch: 0, train_objective: initial, validation_objective: initial }],
        best_epoch: 0,
        best_validation: initial,
    };
    let mut best = policy.clone();
    let mut order: Vec<usize> = (0..fit_paths.n_paths()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let alpha = masks.alphas.draw(&mut rng);
            let (rho, grad) = fit.batch_step(&policy, batch, alpha, contract, cost, risk)?;
            if !rho.is_finite() || !grad.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite objective or gradient at epoch {epoch}, batch {b} (alpha {alpha}, objective {rho})"
                )));
            }
            adam.step(&mut policy, &grad)?;
            sum += rho;
            batches += 1;
        }
        let v = validation_objective(&val, &policy, &val_alphas, contract, cost, risk)?;
        log.epochs.push(EpochRecord { epoch, train_objective: sum / batches as f64, validation_objective: v });
        if v < log.best_validation {
            log.best_validation = v;
            log.best_epoch = epoch;
            best = policy.clone();
        }
    }
    Ok(TrainedPolicy { policy: best, log })
}

/// Entropic risk of the episode losses over all of `paths` and its gradient
/// with respect to the policy parameters.
pub fn risk_and_gradient(
    paths: &PathSet,
    policy: &DeltaPolicy,
    mask: &TradeMask,
    labels: Option<&LabelMatrix>,
    contract: &ContractSpec,
    cost: &CostModel,
    risk: &RiskConfig,
) -> Result<(f64, Gradient)> {
    check_contract(paths, contract)?;
    mask.check_against(paths)?;
    check_labels(labels, paths)?;
    let mut tapes = Vec::with_capacity(paths.n_paths());
    let mut losses = Vec::with_capacity(paths.n_paths());
    for i in 0..paths.n_paths() {
        let mut tape = EpisodeTape::new();
        let input = EpisodeInput { path: paths.path(i), mask: mask.row(i), labels: labels.map(|l| l.row(i)) };
        policy.forward_record(&input, &mut tape)?;
        losses.push(settle_episode(input.path, tape.deltas(), contract, cost)?.loss);
        tapes.push(tape);
    }
    let (rho, weights) = entropy_risk_with_weights(&losses, risk)?;
    let mut g = policy.zero_gradient();
    for (i, (tape, w)) in tapes.iter().zip(weights).enumerate() {
        let mut gd = loss_gradient(paths.path(i), tape.deltas(), contract, cost)?;
        gd.iter_mut().for_each(|x| *x *= w);
        policy.backward(tape, &gd, &mut g)?;
    }
    Ok((rho, g))
}

/// Central-difference check of [`risk_and_gradient`] at the current parameters.
#[allow(clippy::too_many_arguments)]
pub fn check_policy_gradient(
    policy: &mut DeltaPolicy,
    paths: &PathSet,
    mask: &TradeMask,
    labels: Option<&LabelMatrix>,
    contract: &ContractSpec,
    cost: &CostModel,
    risk: &RiskConfig,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = risk_and_gradient(paths, policy, mask, labels, contract, cost, risk)?;
    let objective =
        |p: &DeltaPolicy| risk_and_gradient(paths, p, mask, labels, contract, cost, risk).map_or(f64::NAN, |(r, _)| r);
    grad_check(policy, objective, &analytic, 1e-6, tolerance)
}

/// Holdings the policy takes on one path of `paths`.
pub fn episode_deltas(
    paths: &PathSet,
    i: usize,
    policy: &DeltaPolicy,
    mask: &TradeMask,
    labels: Option<&LabelMatrix>,
) -> Result<Vec<f64>> {
    if i >= paths.n_paths() {
        return Err(Error::shape(format!("path {i} out of range")));
    }
    mask.check_against(paths)?;
    check_labels(labels, paths)?;
    policy.deltas(&EpisodeInput { path: paths.path(i), mask: mask.row(i), labels: labels.map(|l| l.row(i)) })
}

/// All parameters of a policy in block order.
pub fn flat_parameters(policy: &DeltaPolicy) -> Vec<f64> {
    policy.param_blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
}
