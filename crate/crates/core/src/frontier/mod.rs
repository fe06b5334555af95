//! Threshold sweeps, Pareto filtering of (std, mean) points and the
//! comparison summaries built on top of them.

mod report;

pub use report::{
    compare_configs, format_comparison_table, read_frontier_csv, write_comparison_csv, write_frontier_csv, Comparison,
    ComparisonRow, FRONTIER_CSV_HEADER,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::ContractSpec;
use crate::error::{Error, Result};
use crate::forest::LabelMatrix;
use crate::hedging::{
    combine_mask, compute_trade_mask, evaluate_policy, train_policy, Architecture, CostModel, DeltaPolicy, MaskSource,
    PolicyConfig, PolicyEvaluation, RiskConfig, TrainConfig,
};
use crate::market_sim::PathSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// A separately trained policy per threshold.
    Retrain,
    /// One shared policy evaluated under each threshold's mask.
    Fast,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Retrain => "retrain",
            SweepMode::Fast => "fast",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrain" => Ok(SweepMode::Retrain),
            "fast" => Ok(SweepMode::Fast),
            other => Err(Error::config(format!("unknown sweep mode '{other}'"))),
        }
    }
}

/// Identifies the configuration a frontier belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigTag {
    pub scenario: String,
    pub policy: String,
    pub rf: bool,
    pub cost_rate: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub tag: ConfigTag,
    pub alpha: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub avg_trades: f64,
    pub n_test_paths: usize,
    pub mode: SweepMode,
    pub seed: u64,
}

/// `n` evenly spaced thresholds from `lo` to `hi`, both included.
pub fn alpha_grid(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 || !(lo >= 0.0) || !(hi >= lo) || hi > 1.0 {
        return Err(Error::config(format!("invalid threshold grid: {n} points over [{lo}, {hi}]")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect())
}

/// Grid members up to `max` (inclusive, with rounding slack).
pub fn alphas_up_to(grid: &[f64], max: f64) -> Vec<f64> {
    grid.iter().copied().filter(|&a| a <= max + 1e-12).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub mode: SweepMode,
    pub tag: ConfigTag,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::config("threshold grid is empty"));
        }
        if self.alphas.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::config("threshold grid must be sorted ascending"));
        }
        if self.alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::config("thresholds must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Data and models a sweep draws on.
#[derive(Debug, Clone)]
pub struct SweepAssets<'a> {
    pub test_paths: &'a PathSet,
    /// Needed in retrain mode.
    pub train_paths: Option<&'a PathSet>,
    /// Forecast labels of the training and test paths.
    pub train_labels: Option<&'a LabelMatrix>,
    pub test_labels: Option<&'a LabelMatrix>,
    /// Close days labelled 0.
    pub gate_with_labels: bool,
    /// Needed in fast mode and for the BSM policy.
    pub shared_policy: Option<&'a DeltaPolicy>,
    pub policy_cfg: PolicyConfig,
    pub train_cfg: TrainConfig,
    pub contract: ContractSpec,
    pub cost: CostModel,
    pub risk: RiskConfig,
}

/// Evaluates `policy` on the test paths under threshold `alpha`.
pub fn evaluate_at_alpha(assets: &SweepAssets, policy: &DeltaPolicy, alpha: f64) -> Result<PolicyEvaluation> {
    let mut mask = compute_trade_mask(assets.test_paths, alpha)?;
    if assets.gate_with_labels {
        let labels = assets.test_labels.ok_or_else(|| Error::config("label gating requested without test labels"))?;
        mask = combine_mask(&mask, labels)?;
    }
    let feature_labels = if policy.config().include_label { assets.test_labels } else { None };
    evaluate_policy(assets.test_paths, policy, &mask, feature_labels, &assets.contract, &assets.cost)
}

/// Per-job training seed in retrain mode.
pub fn retrain_seed(base: u64, job: usize) -> u64 {
    base ^ (job as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One frontier point per threshold, all measured on the test paths.
pub fn sweep_alpha(cfg: &SweepConfig, assets: &SweepAssets) -> Result<Vec<FrontierPoint>> {
    cfg.validate()?;
    if let Some(train) = assets.train_paths {
        if !train.is_disjoint_from(assets.test_paths) {
            return Err(Error::config("training and test paths overlap"));
        }
    }
    let point = |alpha: f64, ev: PolicyEvaluation| FrontierPoint {
        tag: cfg.tag.clone(),
        alpha,
        mean_loss: ev.mean_loss,
        std_loss: ev.std_loss,
        avg_trades: ev.avg_trades,
        n_test_paths: assets.test_paths.n_paths(),
        mode: cfg.mode,
        seed: cfg.seed,
    };
    let no_training = assets.policy_cfg.architecture == Architecture::Bsm;
    if cfg.mode == SweepMode::Fast || no_training {
        let policy = assets.shared_policy.ok_or_else(|| Error::config("this sweep needs a trained shared policy"))?;
        return cfg.alphas.par_iter().map(|&a| Ok(point(a, evaluate_at_alpha(assets, policy, a)?))).collect();
    }

    let train = assets.train_paths.ok_or_else(|| Error::config("retrain mode needs training paths"))?;
    cfg.alphas
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut masks = MaskSource::threshold(a);
            if let Some(l) = assets.train_labels {
                masks = masks.with_labels(l.clone(), assets.gate_with_labels);
            }
            let train_cfg = TrainConfig { seed: retrain_seed(assets.train_cfg.seed, k), ..assets.train_cfg.clone() };
            let trained = train_policy(
                train,
                &assets.contract,
                &assets.cost,
                &assets.risk,
                &assets.policy_cfg,
                &masks,
                &train_cfg,
            )?;
            Ok(point(a, evaluate_at_alpha(assets, &trained.policy, a)?))
        })
        .collect()
}

/// Indices of the points no other point dominates, in input order. `q`
/// dominates `p` when `std_q ≤ std_p` and `mean_q ≥ mean_p`, one strictly.
pub fn pareto_indices(std_mean: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..std_mean.len()).collect();
    order.sort_by(|&a, &b| std_mean[a].0.total_cmp(&std_mean[b].0).then(std_mean[b].1.total_cmp(&std_mean[a].1)));
    let mut keep = Vec::new();
    // best mean among strictly smaller std
    let mut best_before = f64::NEG_INFINITY;
    let mut g = 0;
    while g < order.len() {
        let s = std_mean[order[g]].0;
        let mut end = g;
        while end < order.len() && std_mean[order[end]].0 == s {
            end += 1;
        }
        // sorted by mean descending inside the group
        let group_best = std_mean[order[g]].1;
        for &i in &order[g..end] {
            let m = std_mean[i].1;
            if !(best_before >= m) && !(group_best > m) {
                keep.push(i);
            }
        }
        best_before = best_before.max(group_best);
        g = end;
    }
    keep.sort_unstable();
    keep
}

pub fn pareto_filter(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let sm: Vec<(f64, f64)> = points.iter().map(|p| (p.std_loss, p.mean_loss)).collect();
    pareto_indices(&sm).into_iter().map(|i| points[i].clone()).collect()
}

/// Average mean and std over the points with `lo ≤ α ≤ hi`.
pub fn summarize_range(points: &[FrontierPoint], lo: f64, hi: f64) -> Result<(f64, f64)> {
    let mut sel: Vec<&FrontierPoint> = in_range(points, lo, hi);
    if sel.is_empty() {
        return Err(Error::domain(format!("no frontier points with alpha in [{lo}, {hi}]")));
    }
    // a fixed summation order makes the result independent of input order
    sel.sort_by(|a, b| {
        a.alpha.total_cmp(&b.alpha).then(a.mean_loss.total_cmp(&b.mean_loss)).then(a.std_loss.total_cmp(&b.std_loss))
    });
    let n = sel.len() as f64;
    let mean = sel.iter().map(|p| p.mean_loss).sum::<f64>() / n;
    let std = sel.iter().map(|p| p.std_loss).sum::<f64>() / n;
    Ok((mean, std))
}

pub(crate) fn in_range(points: &[FrontierPoint], lo: f64, hi: f64) -> Vec<&FrontierPoint> {
    const SLACK: f64 = 1e-12;
    points.iter().filter(|p| p.alpha >= lo - SLACK && p.alpha <= hi + SLACK).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedging::TradeMask;
    use crate::market_sim::{simulate_heston, HestonParams, SimConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tag() -> ConfigTag {
        ConfigTag { scenario: "high_vol".into(), policy: "dense".into(), rf: false, cost_rate: 0.05, lambda: 0.5 }
    }

    fn pt(alpha: f64, mean: f64, std: f64) -> FrontierPoint {
        FrontierPoint {
            tag: tag(),
            alpha,
            mean_loss: mean,
            std_loss: std,
            avg_trades: 0.0,
            n_test_paths: 1,
            mode: SweepMode::Fast,
            seed: 0,
        }
    }

    fn brute_force(sm: &[(f64, f64)]) -> Vec<usize> {
        (0..sm.len())
            .filter(|&p| {
                !(0..sm.len())
                    .any(|q| sm[q].0 <= sm[p].0 && sm[q].1 >= sm[p].1 && (sm[q].0 < sm[p].0 || sm[q].1 > sm[p].1))
            })
            .collect()
    }

    #[test]
    fn grid_endpoints_are_inclusive() {
        let g = alpha_grid(100, 0.0, 0.2).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[99], 0.2);
        assert!((g[1] - 0.2 / 99.0).abs() < 1e-17);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(alphas_up_to(&g, 0.1).len(), 50);
        assert!(alpha_grid(5, 0.3, 0.1).is_err());
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_filter(&[pt(0.0, -3.0, 2.0)]).len(), 1);
        let kept = pareto_filter(&[pt(0.0, -3.0, 2.0), pt(0.1, -2.0, 1.0)]);
        assert_eq!(kept, vec![pt(0.1, -2.0, 1.0)]);
        // exact duplicates do not dominate each other
        assert_eq!(pareto_indices(&[(1.0, -2.0), (1.0, -2.0)]), vec![0, 1]);
        // equal std, better mean wins
        assert_eq!(pareto_indices(&[(1.0, -2.0), (1.0, -1.0)]), vec![1]);
        // equal mean, smaller std wins
        assert_eq!(pareto_indices(&[(2.0, -1.0), (1.0, -1.0)]), vec![1]);
    }

    #[test]
    fn pareto_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for set in 0..1000 {
            let n = rng.random_range(1..120);
            // coarse values force ties on both axes
            let coarse = set % 2 == 0;
            let sm: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    if coarse {
                        (rng.random_range(0..8) as f64, -(rng.random_range(0..8) as f64))
                    } else {
                        (rng.random_range(0.0..10.0), rng.random_range(-20.0..0.0))
                    }
                })
                .collect();
            let fast = pareto_indices(&sm);
            assert_eq!(fast, brute_force(&sm), "set {set}");
            for &p in &fast {
                for &q in &fast {
                    let dominated =
                        sm[q].0 <= sm[p].0 && sm[q].1 >= sm[p].1 && (sm[q].0 < sm[p].0 || sm[q].1 > sm[p].1);
                    assert!(!dominated);
                }
            }
        }
    }

    #[test]
    fn summarize_single_and_empty() {
        let pts = vec![pt(0.0, -10.0, 4.0), pt(0.05, -12.0, 5.0), pt(0.15, -20.0, 9.0)];
        assert_eq!(summarize_range(&pts, 0.1, 0.2).unwrap(), (-20.0, 9.0));
        assert_eq!(summarize_range(&pts, 0.0, 0.1).unwrap(), (-11.0, 4.5));
        assert!(matches!(summarize_range(&pts, 0.3, 0.4), Err(Error::Domain(_))));
    }

    #[test]
    fn summarize_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<FrontierPoint> = alpha_grid(100, 0.0, 0.2)
            .unwrap()
            .into_iter()
            .map(|a| pt(a, rng.random_range(-20.0..-10.0), rng.random_range(3.0..9.0)))
            .collect();
        let a = summarize_range(&pts, 0.0, 0.1).unwrap();
        for _ in 0..5 {
            for i in (1..pts.len()).rev() {
                pts.swap(i, rng.random_range(0..=i));
            }
            assert_eq!(summarize_range(&pts, 0.0, 0.1).unwrap(), a);
        }
    }

    fn assets<'a>(test: &'a PathSet, policy: &'a DeltaPolicy, rate: f64) -> SweepAssets<'a> {
        SweepAssets {
            test_paths: test,
            train_paths: None,
            train_labels: None,
            test_labels: None,
            gate_with_labels: false,
            shared_policy: Some(policy),
            policy_cfg: PolicyConfig::dense(),
            train_cfg: TrainConfig::default(),
            contract: ContractSpec::default(),
            cost: CostModel::new(rate),
            risk: RiskConfig::new(0.5),
        }
    }

    fn heston(n: usize, seed: u64) -> PathSet {
        simulate_heston(&HestonParams::high_vol(), &SimConfig { n_paths: n, seed, ..SimConfig::default() }).unwrap()
    }

    #[test]
    fn single_point_sweep_equals_plain_evaluation() {
        let test = heston(300, 1);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let a = assets(&test, &policy, 0.02);
        let cfg = SweepConfig { alphas: vec![0.0], mode: SweepMode::Fast, tag: tag(), seed: 0 };
        let pts = sweep_alpha(&cfg, &a).unwrap();
        let ev = evaluate_policy(
            &test,
            &policy,
            &TradeMask::full(300, 30),
            None,
            &ContractSpec::default(),
            &CostModel::new(0.02),
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!((pts[0].mean_loss, pts[0].std_loss, pts[0].avg_trades), (ev.mean_loss, ev.std_loss, ev.avg_trades));
    }

    #[test]
    fn sweep_is_monotone_in_trades_and_starts_at_full_trading() {
        let test = heston(500, 2);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = assets(&test, &policy, 0.05);
        let cfg = SweepConfig { alphas: alpha_grid(25, 0.0, 0.2).unwrap(), mode: SweepMode::Fast, tag: tag(), seed: 0 };
        let pts = sweep_alpha(&cfg, &a).unwrap();
        assert_eq!(pts[0].avg_trades, 30.0);
        assert!(pts.windows(2).all(|w| w[1].avg_trades <= w[0].avg_trades));
    }

    #[test]
    fn cost_component_scales_with_the_rate() {
        let test = heston(200, 3);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let free = assets(&test, &policy, 0.0);
        for alpha in [0.0, 0.03, 0.08] {
            let base = evaluate_at_alpha(&free, &policy, alpha).unwrap();
            let c2 = evaluate_at_alpha(&assets(&test, &policy, 0.02), &policy, alpha).unwrap();
            let c5 = evaluate_at_alpha(&assets(&test, &policy, 0.05), &policy, alpha).unwrap();
            assert!((c5.avg_cost - 2.5 * c2.avg_cost).abs() <= 1e-12 * c5.avg_cost);
            assert!((base.mean_loss - c5.mean_loss - c5.avg_cost).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_inputs_are_configuration_errors() {
        let test = heston(20, 4);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut a = assets(&test, &policy, 0.02);
        a.shared_policy = None;
        let cfg = SweepConfig { alphas: vec![0.0, 0.1], mode: SweepMode::Fast, tag: tag(), seed: 0 };
        assert!(matches!(sweep_alpha(&cfg, &a), Err(Error::Config(_))));
        let cfg = SweepConfig { mode: SweepMode::Retrain, ..cfg };
        assert!(matches!(sweep_alpha(&cfg, &a), Err(Error::Config(_))));
        let unsorted = SweepConfig { alphas: vec![0.1, 0.0], ..cfg };
        assert!(matches!(sweep_alpha(&unsorted, &a), Err(Error::Config(_))));
    }

    #[test]
    fn overlapping_train_and_test_sets_are_rejected() {
        let test = heston(20, 5);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut a = assets(&test, &policy, 0.02);
        a.train_paths = Some(&test);
        let cfg = SweepConfig { alphas: vec![0.0], mode: SweepMode::Fast, tag: tag(), seed: 0 };
        assert!(matches!(sweep_alpha(&cfg, &a), Err(Error::Config(_))));
    }

    #[test]
    fn retrain_mode_trains_per_threshold() {
        let all = heston(700, 6);
        let (train, test) = all.split_at(500).unwrap();
        let policy_cfg = PolicyConfig::dense();
        let unused = DeltaPolicy::bsm(100.0, 0.9, 1.0 / 365.0);
        let a = SweepAssets {
            train_paths: Some(&train),
            shared_policy: None,
            train_cfg: TrainConfig { epochs: 1, batch_size: 100, seed: 3, ..TrainConfig::default() },
            policy_cfg,
            ..assets(&test, &unused, 0.03)
        };
        let cfg = SweepConfig { alphas: vec![0.0, 0.05], mode: SweepMode::Retrain, tag: tag(), seed: 3 };
        let pts = sweep_alpha(&cfg, &a).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.mode == SweepMode::Retrain && p.n_test_paths == 200));
        assert_eq!(pts, sweep_alpha(&cfg, &a).unwrap());
    }
}
