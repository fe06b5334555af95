//! The pipeline stages: simulate, label, train, sweep, report, gradcheck.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};

use ehf_core::forest::{
    classification_report, label_matrix, predict_label_matrix, training_rows, write_label_csv, Dataset, Forest,
    LabelMatrix,
};
use ehf_core::frontier::{
    alphas_up_to, compare_configs, evaluate_at_alpha, format_comparison_table, pareto_filter, read_frontier_csv,
    summarize_range, sweep_alpha, write_comparison_csv, write_frontier_csv, ComparisonRow, ConfigTag, FrontierPoint,
    SweepAssets, SweepConfig, SweepMode,
};
use ehf_core::hedging::{
    check_policy_gradient, compute_trade_mask, train_policy, Architecture, CostModel, DeltaPolicy, MaskSource,
    RiskConfig, TrainedPolicy,
};
use ehf_core::market_sim::{simulate_heston, HestonParams, PathSet, SimConfig};
use ehf_core::nn::{grad_check, perturb, Activation, DenseLayer, Parameterized};
use ehf_core::{ContractSpec, Error, PolicyConfig, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::artifacts::{self, Layout};
use crate::config::{Job, RunConfig};

pub fn simulate(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let paths = simulate_heston(&cfg.heston()?, &cfg.sim_config())?;
    let manifest = artifacts::save_paths(layout, cfg, &paths)?;
    println!(
        "simulated {} paths of {} steps ({} scenario, seed {})",
        paths.n_paths(),
        paths.n_steps(),
        cfg.scenario.name,
        cfg.seed
    );
    println!("wrote {} (sha256 {})", layout.paths().display(), manifest.sha256);
    Ok(())
}

pub fn label(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let paths = artifacts::load_paths(layout)?;
    let (train, test) = artifacts::split(cfg, &paths)?;
    let beta = cfg.labels.beta;
    let rule = cfg.labels.rule;
    let truth_train = label_matrix(&train, beta, rule)?;
    let truth_test = label_matrix(&test, beta, rule)?;
    let (rows, y) = training_rows(&train, &truth_train)?;
    let forest = Forest::fit(&Dataset::new(&rows, &y)?, &cfg.forest_config())?;

    let pred_train = predict_label_matrix(&forest, &train)?;
    let pred_test = predict_label_matrix(&forest, &test)?;
    let both = paths.select(0..cfg.simulation.n_train + cfg.simulation.n_test);
    let predicted = predict_label_matrix(&forest, &both)?;
    artifacts::write_labels(&layout.predicted_labels(), &predicted)?;
    artifacts::save_forest(layout, &forest)?;

    let csv = layout.labels_dir().join("labels.csv");
    let mut w = BufWriter::new(fs::File::create(&csv)?);
    write_label_csv(&test, &truth_test, &pred_test, &mut w)?;
    w.flush()?;

    let report_of = |p: &LabelMatrix, t: &LabelMatrix, s: &PathSet| -> Result<_> {
        let (_, truth) = training_rows(s, t)?;
        let (_, pred) = training_rows(s, p)?;
        classification_report(&pred, &truth)
    };
    let fit = report_of(&pred_train, &truth_train, &train)?;
    let held_out = report_of(&pred_test, &truth_test, &test)?;
    let text =
        format!("beta {beta}, {} trees\n\ntraining split\n{fit}\n\ntest split\n{held_out}\n", cfg.labels.n_trees);
    artifacts::write_bytes(&layout.labels_dir().join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn network_jobs(cfg: &RunConfig) -> Vec<(usize, Job)> {
    cfg.jobs().into_iter().enumerate().filter(|(_, j)| j.architecture != Architecture::Bsm).collect()
}

fn labels_if_needed(cfg: &RunConfig, layout: &Layout) -> Result<Option<(LabelMatrix, LabelMatrix)>> {
    if cfg.needs_labels() {
        artifacts::load_split_labels(layout, cfg).map(Some)
    } else {
        Ok(None)
    }
}

fn save_trained(layout: &Layout, job: &Job, k: Option<usize>, trained: &TrainedPolicy) -> Result<()> {
    artifacts::save_checkpoint(&layout.checkpoint(job, k), &trained.policy)?;
    artifacts::write_json(&layout.training_log(job, k), &trained.log)
}

pub fn train(cfg: &RunConfig, layout: &Layout, mode: SweepMode) -> Result<()> {
    let paths = artifacts::load_paths(layout)?;
    let (train_paths, _) = artifacts::split(cfg, &paths)?;
    let labels = labels_if_needed(cfg, layout)?;
    let grid = cfg.alphas()?;
    let contract = cfg.contract();
    for (j, job) in network_jobs(cfg) {
        let policy_cfg = cfg.policy_config(job.architecture, job.rf)?;
        let cost = CostModel { rate: job.cost_rate, charge_liquidation: cfg.costs.charge_liquidation };
        let risk = RiskConfig::new(job.lambda);
        let with_labels = |m: MaskSource| match (&labels, job.rf) {
            (Some((train_labels, _)), true) => m.with_labels(train_labels.clone(), true),
            _ => m,
        };
        match mode {
            SweepMode::Fast => {
                let pool = alphas_up_to(&grid, cfg.alpha.summary_hi);
                let masks = with_labels(MaskSource::sampled(pool));
                let trained =
                    train_policy(&train_paths, &contract, &cost, &risk, &policy_cfg, &masks, &cfg.train_config(j))?;
                save_trained(layout, &job, None, &trained)?;
                let log = &trained.log;
                println!(
                    "{}: objective {:.4} -> {:.4} (best epoch {})",
                    job.name(),
                    log.epochs[0].validation_objective,
                    log.best_validation,
                    log.best_epoch
                );
            }
            SweepMode::Retrain => {
                grid.par_iter()
                    .enumerate()
                    .map(|(k, &alpha)| {
                        let masks = with_labels(MaskSource::threshold(alpha));
                        let tc = cfg.train_config(j * grid.len() + k);
                        let trained = train_policy(&train_paths, &contract, &cost, &risk, &policy_cfg, &masks, &tc)?;
                        save_trained(layout, &job, Some(k), &trained)
                    })
                    .collect::<Result<Vec<()>>>()?;
                println!("{}: trained {} per-threshold policies", job.name(), grid.len());
            }
        }
    }
    Ok(())
}

fn check_loaded(policy: &DeltaPolicy, expected: &PolicyConfig, job: &Job) -> Result<()> {
    if policy.config() != expected {
        return Err(Error::Config(format!(
            "checkpoint for {} was trained with a different policy configuration; retrain",
            job.name()
        )));
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, layout: &Layout, mode: SweepMode) -> Result<()> {
    let paths = artifacts::load_paths(layout)?;
    let (train_paths, test_paths) = artifacts::split(cfg, &paths)?;
    let labels = labels_if_needed(cfg, layout)?;
    let grid = cfg.alphas()?;
    let contract: ContractSpec = cfg.contract();
    let mut all = Vec::new();
    for job in cfg.jobs() {
        let policy_cfg = cfg.policy_config(job.architecture, job.rf)?;
        let tag = ConfigTag {
            scenario: cfg.scenario.name.clone(),
            policy: job.architecture.name().into(),
            rf: job.rf,
            cost_rate: job.cost_rate,
            lambda: job.lambda,
        };
        let job_labels = labels.as_ref().filter(|_| job.rf);
        let assets = SweepAssets {
            test_paths: &test_paths,
            train_paths: Some(&train_paths),
            train_labels: job_labels.map(|l| &l.0),
            test_labels: job_labels.map(|l| &l.1),
            gate_with_labels: job.rf,
            shared_policy: None,
            policy_cfg: policy_cfg.clone(),
            train_cfg: cfg.train_config(0),
            contract,
            cost: CostModel { rate: job.cost_rate, charge_liquidation: cfg.costs.charge_liquidation },
            risk: RiskConfig::new(job.lambda),
        };
        let points = if job.architecture == Architecture::Bsm || mode == SweepMode::Fast {
            let policy = if job.architecture == Architecture::Bsm {
                DeltaPolicy::bsm(contract.strike, cfg.bsm_vol()?, paths.dt())
            } else {
                let p = artifacts::load_checkpoint(&layout.checkpoint(&job, None))?;
                check_loaded(&p, &policy_cfg, &job)?;
                p
            };
            let sc = SweepConfig { alphas: grid.clone(), mode, tag, seed: cfg.seed };
            sweep_alpha(&sc, &SweepAssets { shared_policy: Some(&policy), ..assets })?
        } else {
            grid.par_iter()
                .enumerate()
                .map(|(k, &alpha)| {
                    let p = artifacts::load_checkpoint(&layout.checkpoint(&job, Some(k)))?;
                    check_loaded(&p, &policy_cfg, &job)?;
                    let ev = evaluate_at_alpha(&assets, &p, alpha)?;
                    Ok(FrontierPoint {
                        tag: tag.clone(),
                        alpha,
                        mean_loss: ev.mean_loss,
                        std_loss: ev.std_loss,
                        avg_trades: ev.avg_trades,
                        n_test_paths: test_paths.n_paths(),
                        mode,
                        seed: cfg.seed,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        if points.windows(2).any(|w| w[1].avg_trades > w[0].avg_trades) {
            return Err(Error::State(format!("average trades rise with the threshold in {}", job.name())));
        }
        let path = layout.frontiers_dir().join(format!("{}.csv", job.name()));
        artifacts::create_parent(&path)?;
        write_frontier_csv(&points, BufWriter::new(fs::File::create(&path)?))?;
        let (m, s) = summarize_range(&points, cfg.alpha.summary_lo, cfg.alpha.summary_hi)?;
        println!("{}: {} points, average mean {m:.3}, std {s:.3}", job.name(), points.len());
        all.extend(points);
    }
    write_frontier_csv(&all, BufWriter::new(fs::File::create(layout.frontier())?))?;
    println!("wrote {}", layout.frontier().display());
    Ok(())
}

type Key = (String, bool, String, String);

fn key(policy: &str, rf: bool, cost: f64, lambda: f64) -> Key {
    (policy.to_string(), rf, cost.to_string(), lambda.to_string())
}

fn percent_label(rate: f64) -> String {
    format!("{}%", (rate * 100.0 * 1e9).round() / 1e9)
}

/// A comparison of two frontier families, matched by cost rate and lambda.
struct Table {
    file: &'static str,
    title: &'static str,
    base: (&'static str, bool),
    variant: (&'static str, bool),
    variant_name: &'static str,
}

const TABLES: [Table; 4] = [
    Table {
        file: "rf",
        title: "Improvement through RF classifier (dense)",
        base: ("dense", false),
        variant: ("dense", true),
        variant_name: "DH+RF",
    },
    Table {
        file: "rf_gru",
        title: "Improvement through RF classifier (gru)",
        base: ("gru", false),
        variant: ("gru", true),
        variant_name: "GRU+RF",
    },
    Table {
        file: "architectures",
        title: "Comparing network architectures",
        base: ("dense", false),
        variant: ("gru", false),
        variant_name: "DH+GRU",
    },
    Table {
        file: "bsm",
        title: "Deep hedging against the BSM delta",
        base: ("bsm", false),
        variant: ("dense", false),
        variant_name: "DH",
    },
];

pub fn report(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    let points = read_frontier_csv(BufReader::new(artifacts::open(&layout.frontier())?))?;
    let mut groups: BTreeMap<Key, Vec<FrontierPoint>> = BTreeMap::new();
    for p in points {
        groups.entry(key(&p.tag.policy, p.tag.rf, p.tag.cost_rate, p.tag.lambda)).or_default().push(p);
    }
    let (lo, hi) = (cfg.alpha.summary_lo, cfg.alpha.summary_hi);
    let out = layout.report_dir();
    fs::create_dir_all(&out)?;
    let mut text = format!("averages over thresholds in [{lo}, {hi}]\n\n");

    let mut summary = String::from("policy,rf,cost_rate,lambda,avg_mean_loss,avg_std_loss,pareto_points\n");
    text.push_str(&format!("{:<24} {:>10} {:>10} {:>8}\n", "frontier", "avg mean", "avg std", "pareto"));
    for ((policy, rf, cost, lambda), pts) in &groups {
        let (m, s) = summarize_range(pts, lo, hi)?;
        let front = pareto_filter(pts).len();
        let name = format!("{policy}{}_c{cost}_l{lambda}", if *rf { "-rf" } else { "" });
        text.push_str(&format!("{name:<24} {m:>10.3} {s:>10.3} {front:>8}\n"));
        summary.push_str(&format!("{policy},{},{cost},{lambda},{m},{s},{front}\n", *rf as u8));
    }
    artifacts::write_bytes(&out.join("summary.csv"), summary.as_bytes())?;

    for table in TABLES {
        let Table { file, title, base, variant, variant_name } = table;
        for &lambda in &cfg.risk.lambdas {
            let mut rows = Vec::new();
            for &rate in &cfg.costs.rates {
                let b = groups.get(&key(base.0, base.1, rate, lambda));
                let v = groups.get(&key(variant.0, variant.1, rate, lambda));
                if let (Some(b), Some(v)) = (b, v) {
                    rows.push(ComparisonRow { label: percent_label(rate), comparison: compare_configs(b, v, lo, hi)? });
                }
            }
            if rows.is_empty() {
                continue;
            }
            let base_name = if base.0 == "bsm" {
                "BSM"
            } else if base.0 == "gru" {
                "GRU"
            } else {
                "DH"
            };
            text.push('\n');
            text.push_str(&format_comparison_table(
                &format!("{title}, lambda {lambda}"),
                base_name,
                variant_name,
                &rows,
            ));
            let csv = out.join(format!("{file}_l{lambda}.csv"));
            let mut buf = Vec::new();
            write_comparison_csv(&rows, &mut buf)?;
            artifacts::write_bytes(&csv, &buf)?;
        }
    }
    artifacts::write_bytes(&out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub struct GradCheckLine {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Gradient checks of a linear layer under a quadratic loss and of both
/// network policies on short Heston episodes.
pub fn gradcheck() -> Result<Vec<GradCheckLine>> {
    let mut lines = Vec::new();

    let mut layer =
        DenseLayer::from_parts(vec![0.3, -1.2, 0.8, 0.05, 2.0, -0.4], vec![0.1, 0.2], 3, Activation::Identity)?;
    let x = [1.5, -0.5, 2.0];
    let target = [0.7, -1.1];
    let y = layer.forward(&x)?;
    let dy: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
    let mut g = layer.zero_gradient();
    let (gw, gb) = g.blocks.split_at_mut(1);
    layer.backward_into(&x, &y, &dy, &mut gw[0], &mut gb[0], None);
    let loss =
        |l: &DenseLayer| l.forward(&x).map_or(f64::NAN, |y| y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum());
    let r = grad_check(&mut layer, loss, &g, 1e-5, 1e-9)?;
    lines.push(GradCheckLine {
        name: "linear layer, quadratic loss",
        max_relative_error: r.max_relative_error,
        tolerance: r.tolerance,
        passed: r.passed,
    });

    let cost = CostModel::new(0.02);
    let risk = RiskConfig::new(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: [(&'static str, PolicyConfig, usize, usize, f64); 2] = [
        (
            "dense policy",
            PolicyConfig { include_change: true, include_label: true, ..PolicyConfig::dense() },
            4,
            8,
            1e-5,
        ),
        ("GRU policy", PolicyConfig { include_change: true, include_label: true, ..PolicyConfig::gru() }, 2, 30, 1e-4),
    ];
    for (name, policy_cfg, n_paths, n_steps, tol) in cases {
        let paths = simulate_heston(
            &HestonParams::high_vol(),
            &SimConfig { n_paths, n_steps, seed: 3, ..SimConfig::default() },
        )?;
        let mask = compute_trade_mask(&paths, 0.02)?;
        let rows: Vec<Vec<u8>> =
            (0..n_paths).map(|i| (0..n_steps).map(|t| ((i + t) % 3 != 0) as u8).collect()).collect();
        let labels = LabelMatrix::from_rows(&rows)?;
        let contract = ContractSpec { maturity_steps: n_steps, ..ContractSpec::default() };
        let mut policy = DeltaPolicy::new(&policy_cfg, &mut rng)?;
        perturb(&mut policy, 0.05, &mut rng);
        let r = check_policy_gradient(&mut policy, &paths, &mask, Some(&labels), &contract, &cost, &risk, tol)?;
        lines.push(GradCheckLine { name, max_relative_error: r.max_relative_error, tolerance: tol, passed: r.passed });
    }
    Ok(lines)
}
