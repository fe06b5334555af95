//! Run configuration: a TOML file of sections with flat key-value pairs.

use std::path::{Path, PathBuf};

use ehf_core::forest::{ForestConfig, LabelRule};
use ehf_core::frontier::{alpha_grid, SweepMode};
use ehf_core::hedging::{Architecture, PolicyConfig, TrainConfig};
use ehf_core::market_sim::{HestonParams, SimConfig};
use ehf_core::nn::AdamConfig;
use ehf_core::{ContractSpec, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; every stage derives its own seed from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub contract: ContractConfig,
    pub costs: CostsConfig,
    pub risk: RiskSection,
    #[serde(default)]
    pub alpha: AlphaConfig,
    pub policies: PoliciesConfig,
    #[serde(default)]
    pub labels: LabelsConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// A preset (`low_vol`, `high_vol`) with optional overrides, or `custom`
/// with every parameter given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub v0: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: Option<f64>,
    pub mu: Option<f64>,
    pub sigma_v: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// The step length is one day of a year this long.
    #[serde(default = "default_days_per_year")]
    pub days_per_year: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    pub strike: f64,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self { strike: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub rates: Vec<f64>,
    #[serde(default)]
    pub charge_liquidation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaConfig {
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    /// Thresholds averaged in the comparison tables.
    pub summary_lo: f64,
    pub summary_hi: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self { points: 100, lo: 0.0, hi: 0.2, summary_lo: 0.0, summary_hi: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoliciesConfig {
    pub architectures: Vec<Architecture>,
    /// Run every network policy with and/or without the forecast labels.
    #[serde(default = "default_rf")]
    pub rf: Vec<bool>,
    #[serde(default)]
    pub include_change: bool,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_width")]
    pub hidden_width: usize,
    #[serde(default = "default_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_gru_hidden")]
    pub gru_hidden: usize,
    /// Volatility of the BSM baseline; the square root of v0 when absent.
    pub bsm_vol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    pub beta: f64,
    pub rule: LabelRule,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap_fraction: f64,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        let f = ForestConfig::default();
        Self {
            beta: 0.05,
            rule: LabelRule::LocalExtremum,
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
            bootstrap_fraction: f.bootstrap_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub validation_alphas: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            validation_fraction: t.validation_fraction,
            validation_alphas: t.validation_alphas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub mode: SweepMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { mode: SweepMode::Fast }
    }
}

fn default_s0() -> f64 {
    100.0
}
fn default_steps() -> usize {
    30
}
fn default_days_per_year() -> f64 {
    365.0
}
fn default_rf() -> Vec<bool> {
    vec![false]
}
fn default_window() -> usize {
    PolicyConfig::default().window
}
fn default_width() -> usize {
    PolicyConfig::default().hidden_width
}
fn default_layers() -> usize {
    PolicyConfig::default().hidden_layers
}
fn default_gru_hidden() -> usize {
    PolicyConfig::default().gru_hidden
}

/// One trained (or closed-form) policy configuration of the experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub architecture: Architecture,
    pub rf: bool,
    pub cost_rate: f64,
    pub lambda: f64,
}

impl Job {
    /// File stem, e.g. `dense-rf_c0.05_l0.5`.
    pub fn name(&self) -> String {
        format!("{}{}_c{}_l{}", self.architecture.name(), if self.rf { "-rf" } else { "" }, self.cost_rate, self.lambda)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.heston()?.validate()?;
        self.sim_config().validate()?;
        let s = &self.simulation;
        if s.n_train == 0 || s.n_test == 0 {
            return Err(Error::Config("train and test splits must be non-empty".into()));
        }
        if s.n_train + s.n_test > s.n_paths {
            return Err(Error::Config(format!(
                "train + test ({} + {}) exceeds the {} simulated paths",
                s.n_train, s.n_test, s.n_paths
            )));
        }
        self.contract().validate()?;
        if self.costs.rates.is_empty() || self.costs.rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("cost rates must be a non-empty list in [0, 1)".into()));
        }
        if self.risk.lambdas.is_empty() || self.risk.lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("risk lambdas must be a non-empty list of positive numbers".into()));
        }
        self.alphas()?;
        let a = &self.alpha;
        if !(a.summary_lo <= a.summary_hi) {
            return Err(Error::Config("summary range must satisfy summary_lo <= summary_hi".into()));
        }
        if self.policies.architectures.is_empty() || self.policies.rf.is_empty() {
            return Err(Error::Config("at least one architecture and one rf flag are required".into()));
        }
        for arch in [Architecture::Dense, Architecture::Gru] {
            self.policy_config(arch, true)?.validate()?;
        }
        if let Some(v) = self.policies.bsm_vol {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config("bsm_vol must be positive".into()));
            }
        }
        if !(self.labels.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        self.forest_config().validate()?;
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn heston(&self) -> Result<HestonParams> {
        let sc = &self.scenario;
        let base = match sc.name.as_str() {
            "low_vol" => Some(HestonParams::low_vol()),
            "high_vol" => Some(HestonParams::high_vol()),
            "custom" => None,
            other => return Err(Error::Config(format!("unknown scenario '{other}'"))),
        };
        let pick = |v: Option<f64>, preset: Option<f64>, name: &str| {
            v.or(preset).ok_or_else(|| Error::Config(format!("custom scenario needs '{name}'")))
        };
        Ok(HestonParams {
            v0: pick(sc.v0, base.map(|b| b.v0), "v0")?,
            theta: pick(sc.theta, base.map(|b| b.theta), "theta")?,
            kappa: pick(sc.kappa, base.map(|b| b.kappa), "kappa")?,
            mu: pick(sc.mu, base.map(|b| b.mu), "mu")?,
            sigma_v: pick(sc.sigma_v, base.map(|b| b.sigma_v), "sigma_v")?,
            rho: pick(sc.rho, base.map(|b| b.rho), "rho")?,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig { s0: s.s0, n_steps: s.n_steps, dt: 1.0 / s.days_per_year, n_paths: s.n_paths, seed: self.seed }
    }

    pub fn contract(&self) -> ContractSpec {
        ContractSpec {
            strike: self.contract.strike,
            maturity_steps: self.simulation.n_steps,
            ..ContractSpec::default()
        }
    }

    pub fn alphas(&self) -> Result<Vec<f64>> {
        alpha_grid(self.alpha.points, self.alpha.lo, self.alpha.hi)
    }

    pub fn bsm_vol(&self) -> Result<f64> {
        Ok(self.policies.bsm_vol.unwrap_or(self.heston()?.v0.sqrt()))
    }

    pub fn policy_config(&self, architecture: Architecture, rf: bool) -> Result<PolicyConfig> {
        let p = &self.policies;
        Ok(PolicyConfig {
            architecture,
            include_change: p.include_change,
            include_label: rf,
            window: p.window,
            hidden_width: p.hidden_width,
            hidden_layers: p.hidden_layers,
            gru_hidden: p.gru_hidden,
        })
    }

    pub fn forest_config(&self) -> ForestConfig {
        let l = &self.labels;
        ForestConfig {
            n_trees: l.n_trees,
            max_depth: l.max_depth,
            min_leaf: l.min_leaf,
            bootstrap: true,
            bootstrap_fraction: l.bootstrap_fraction,
            seed: self.seed.wrapping_add(1),
        }
    }

    /// Training settings for job `k` of the experiment matrix.
    pub fn train_config(&self, job: usize) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: AdamConfig { learning_rate: t.learning_rate, ..AdamConfig::default() },
            validation_fraction: t.validation_fraction,
            validation_alphas: t.validation_alphas,
            seed: ehf_core::frontier::retrain_seed(self.seed.wrapping_add(2), job),
        }
    }

    /// Every (architecture, rf, cost, λ) combination; BSM never reads labels.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &architecture in &self.policies.architectures {
            let rf_flags: &[bool] = if architecture == Architecture::Bsm { &[false] } else { &self.policies.rf };
            for &rf in rf_flags {
                for &cost_rate in &self.costs.rates {
                    for &lambda in &self.risk.lambdas {
                        let job = Job { architecture, rf, cost_rate, lambda };
                        if !jobs.contains(&job) {
                            jobs.push(job);
                        }
                    }
                }
            }
        }
        jobs
    }

    pub fn needs_labels(&self) -> bool {
        self.jobs().iter().any(|j| j.rf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
output_dir = "out"

[scenario]
name = "high_vol"

[simulation]
n_paths = 100
n_train = 80
n_test = 20

[costs]
rates = [0.02, 0.05]

[risk]
lambdas = [0.5]

[policies]
architectures = ["dense", "bsm"]
rf = [false, true]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.heston().unwrap(), HestonParams::high_vol());
        assert_eq!(cfg.alphas().unwrap().len(), 100);
        assert_eq!(cfg.labels.beta, 0.05);
        assert_eq!(cfg.labels.n_trees, 50);
        assert_eq!(cfg.sim_config().dt, 1.0 / 365.0);
        // dense × {rf off, on} × 2 costs + bsm × 2 costs
        assert_eq!(cfg.jobs().len(), 6);
        assert!(cfg.needs_labels());
    }

    #[test]
    fn custom_scenario_needs_every_parameter() {
        let text = MINIMAL.replace("name = \"high_vol\"", "name = \"custom\"\nv0 = 0.8");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace(
            "name = \"high_vol\"",
            "name = \"custom\"\nv0 = 0.8\ntheta = 0.8\nkappa = 1.0\nmu = 0.01\nsigma_v = 4.0\nrho = -0.7",
        );
        assert_eq!(RunConfig::parse(&text).unwrap().heston().unwrap(), HestonParams::high_vol());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (from, to) in [
            ("n_test = 20", "n_test = 21"),
            ("rates = [0.02, 0.05]", "rates = []"),
            ("lambdas = [0.5]", "lambdas = [-0.5]"),
            ("name = \"high_vol\"", "name = \"medium\""),
            ("seed = 7", "seed = 7\nunknown_key = 1"),
            ("architectures = [\"dense\", \"bsm\"]", "architectures = [\"lstm\"]"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn job_names_are_distinct() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let mut names: Vec<String> = cfg.jobs().iter().map(Job::name).collect();
        assert!(names.contains(&"dense-rf_c0.05_l0.5".to_string()));
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 6);
    }

    #[test]
    fn shipped_configs_parse() {
        let full = RunConfig::parse(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!((full.simulation.n_train, full.simulation.n_test), (100_000, 20_000));
        assert_eq!(full.sweep.mode, SweepMode::Retrain);
        let desk = RunConfig::parse(include_str!("../../../configs/desk.toml")).unwrap();
        assert_eq!((desk.simulation.n_train, desk.simulation.n_test), (20_000, 5_000));
        assert_eq!(desk.sweep.mode, SweepMode::Fast);
        // bsm + {dense, gru} × {rf off, on}, at three costs
        assert_eq!(desk.jobs().len(), 15);
    }
}
