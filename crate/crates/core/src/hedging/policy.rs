//! Delta policies: the closed-form BSM hedge, a dense network applied day by
//! day, and a two-layer GRU over a sliding window of prices.
//!
//! On a closed day the holding is carried over unchanged, so δ_t = δ_{t−1}.
//! Every network sees its previous holding as an input, which makes the
//! episode a recurrence even for the dense policy; the recorded backward pass
//! follows that chain through all days.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bsm::bs_delta;
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradient, GruCell, Mlp, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Bsm,
    Dense,
    Gru,
}

impl Architecture {
    pub fn tag(self) -> u32 {
        match self {
            Architecture::Bsm => 0,
            Architecture::Dense => 1,
            Architecture::Gru => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::Bsm),
            1 => Ok(Architecture::Dense),
            2 => Ok(Architecture::Gru),
            other => Err(Error::format(format!("unknown architecture tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Bsm => "bsm",
            Architecture::Dense => "dense",
            Architecture::Gru => "gru",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bsm" => Ok(Architecture::Bsm),
            "dense" => Ok(Architecture::Dense),
            "gru" => Ok(Architecture::Gru),
            other => Err(Error::config(format!("unknown policy architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub architecture: Architecture,
    /// Feed the one-day relative price change as an input.
    pub include_change: bool,
    /// Feed the forecast label of the day as an input.
    pub include_label: bool,
    /// Number of most recent prices the GRU sees each day.
    pub window: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub gru_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Dense,
            include_change: false,
            include_label: false,
            window: 3,
            hidden_width: 32,
            hidden_layers: 2,
            gru_hidden: 10,
        }
    }
}

impl PolicyConfig {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn gru() -> Self {
        Self { architecture: Architecture::Gru, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::config("policy window must be at least 1"));
        }
        if self.architecture != Architecture::Bsm
            && (self.hidden_width == 0 || self.hidden_layers == 0 || self.gru_hidden == 0)
        {
            return Err(Error::config("network sizes must be positive"));
        }
        Ok(())
    }

    fn extras(&self) -> usize {
        self.include_change as usize + self.include_label as usize
    }

    /// Input width of the day-by-day dense network: log-moneyness, time
    /// fraction, previous holding and the optional extras.
    pub fn dense_inputs(&self) -> usize {
        3 + self.extras()
    }

    /// Input width of the first GRU layer: the price window, time fraction,
    /// previous holding and the optional extras.
    pub fn gru_inputs(&self) -> usize {
        self.window + 2 + self.extras()
    }

    fn mlp_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.dense_inputs()];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

const DENSE_PREV: usize = 2;

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
enum Model {
    Bsm { strike: f64, vol: f64, dt: f64 },
    Dense { net: Mlp },
    Gru { gru1: GruCell, gru2: GruCell, head: Mlp, fallback: Mlp },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPolicy {
    config: PolicyConfig,
    model: Model,
}

/// What a recorded forward pass keeps for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTape {
    deltas: Vec<f64>,
    mask: Vec<bool>,
    stride: usize,
    buf: Vec<f64>,
    recorded: bool,
}

impl EpisodeTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    fn reset(&mut self, mask: &[bool], stride: usize) {
        let n = mask.len();
        self.deltas.clear();
        self.deltas.resize(n, 0.0);
        self.mask.clear();
        self.mask.extend_from_slice(mask);
        self.stride = stride;
        self.buf.clear();
        self.buf.resize(n * stride, 0.0);
        self.recorded = false;
    }
}

/// Inputs of one episode besides the policy itself.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeInput<'a> {
    /// Prices for days 0..=T.
    pub path: &'a [f64],
    /// Open days among 0..T.
    pub mask: &'a [bool],
    /// Forecast labels for days 0..T, required when the policy reads them.
    pub labels: Option<&'a [u8]>,
}

impl DeltaPolicy {
    /// Closed-form delta with constant volatility and zero rate.
    pub fn bsm(strike: f64, vol: f64, dt: f64) -> Self {
        Self {
            config: PolicyConfig { architecture: Architecture::Bsm, ..PolicyConfig::default() },
            model: Model::Bsm { strike, vol, dt },
        }
    }

    /// A freshly initialised network policy.
    pub fn new<R: Rng>(config: &PolicyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let model = match config.architecture {
            Architecture::Bsm => {
                return Err(Error::config("the BSM policy is built with DeltaPolicy::bsm"));
            }
            Architecture::Dense => {
                Model::Dense { net: Mlp::new(&config.mlp_sizes(), Activation::Relu, Activation::Sigmoid, rng) }
            }
            Architecture::Gru => {
                let h = config.gru_hidden;
                Model::Gru {
                    gru1: GruCell::new(config.gru_inputs(), h, rng),
                    gru2: GruCell::new(h, h, rng),
                    head: Mlp::new(&[h, 1], Activation::Identity, Activation::Sigmoid, rng),
                    fallback: Mlp::new(&config.mlp_sizes(), Activation::Relu, Activation::Sigmoid, rng),
                }
            }
        };
        Ok(Self { config: config.clone(), model })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Strike, volatility and step length of a BSM policy.
    pub fn bsm_parameters(&self) -> Option<(f64, f64, f64)> {
        match self.model {
            Model::Bsm { strike, vol, dt } => Some((strike, vol, dt)),
            _ => None,
        }
    }

    /// Zeroes the output layer so every open day yields δ = 0.5.
    pub fn zero_output_layer(&mut self) {
        let last = |m: &mut Mlp| {
            if let Some(l) = m.layers.last_mut() {
                l.weights.iter_mut().for_each(|w| *w = 0.0);
                l.bias.iter_mut().for_each(|b| *b = 0.0);
            }
        };
        match &mut self.model {
            Model::Bsm { .. } => {}
            Model::Dense { net } => last(net),
            Model::Gru { head, fallback, .. } => {
                last(head);
                last(fallback);
            }
        }
    }

    fn check_input(&self, input: &EpisodeInput) -> Result<()> {
        let n = input.mask.len();
        if n == 0 || input.path.len() != n + 1 {
            return Err(Error::shape(format!("{} prices do not fit {} trading days", input.path.len(), n)));
        }
        if self.config.include_label && self.config.architecture != Architecture::Bsm {
            match input.labels {
                Some(l) if l.len() == n => {}
                Some(l) => return Err(Error::shape(format!("{} labels for {} days", l.len(), n))),
                None => return Err(Error::config("policy reads forecast labels but none were supplied")),
            }
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        match &self.model {
            Model::Bsm { .. } => 0,
            Model::Dense { net } => net.tape_len(),
            Model::Gru { gru1, gru2, head, fallback } => {
                (gru1.tape_len() + gru2.tape_len() + head.tape_len()).max(fallback.tape_len())
            }
        }
    }

    fn extras(&self, input: &EpisodeInput, t: usize, out: &mut [f64]) {
        let mut k = 0;
        if self.config.include_change {
            out[k] = if t == 0 { 0.0 } else { input.path[t] / input.path[t - 1] - 1.0 };
            k += 1;
        }
        if self.config.include_label {
            out[k] = input.labels.map_or(1.0, |l| l[t] as f64);
        }
    }

    fn dense_features(&self, input: &EpisodeInput, t: usize, prev: f64, out: &mut [f64]) {
        let n = input.mask.len() as f64;
        out[0] = (input.path[t] / input.path[0]).ln();
        out[1] = t as f64 / n;
        out[DENSE_PREV] = prev;
        self.extras(input, t, &mut out[3..]);
    }

    fn gru_features(&self, input: &EpisodeInput, t: usize, prev: f64, out: &mut [f64]) {
        let w = self.config.window;
        let n = input.mask.len() as f64;
        let s0 = input.path[0];
        for (o, s) in out[..w].iter_mut().zip(&input.path[t + 1 - w..=t]) {
            *o = (s / s0).ln();
        }
        out[w] = t as f64 / n;
        out[w + 1] = prev;
        self.extras(input, t, &mut out[w + 2..]);
    }

    /// Holdings for one episode.
    pub fn deltas(&self, input: &EpisodeInput) -> Result<Vec<f64>> {
        let mut tape = EpisodeTape::new();
        self.forward_record(input, &mut tape)?;
        Ok(tape.deltas)
    }

    /// Forward pass that keeps everything the backward pass needs.
    pub fn forward_record(&self, input: &EpisodeInput, tape: &mut EpisodeTape) -> Result<()> {
        self.check_input(input)?;
        let n = input.mask.len();
        let stride = self.stride();
        tape.reset(input.mask, stride);
        let mut prev = 0.0;
        match &self.model {
            Model::Bsm { strike, vol, dt } => {
                for t in 0..n {
                    if input.mask[t] {
                        prev = bs_delta(input.path[t], *strike, 0.0, *vol, (n - t) as f64 * dt)?;
                    }
                    tape.deltas[t] = prev;
                }
            }
            Model::Dense { net } => {
                let k = net.inputs();
                for t in 0..n {
                    if input.mask[t] {
                        let step = &mut tape.buf[t * stride..(t + 1) * stride];
                        self.dense_features(input, t, prev, &mut step[..k]);
                        prev = net.forward_record(step)[0];
                    }
                    tape.deltas[t] = prev;
                }
            }
            Model::Gru { gru1, gru2, head, fallback } => {
                let w = self.config.window;
                let h = self.config.gru_hidden;
                let (l1, l2) = (gru1.tape_len(), gru2.tape_len());
                let zeros = vec![0.0; h];
                let mut x = vec![0.0; gru1.input];
                for t in 0..n {
                    let (before, rest) = tape.buf.split_at_mut(t * stride);
                    let step = &mut rest[..stride];
                    if t + 1 < w {
                        if input.mask[t] {
                            self.dense_features(input, t, prev, &mut step[..fallback.inputs()]);
                            prev = fallback.forward_record(step)[0];
                        }
                    } else {
                        let (h1_prev, h2_prev) = if t + 1 > w {
                            let p = &before[(t - 1) * stride..];
                            (&p[l1 - h..l1], &p[l1 + l2 - h..l1 + l2])
                        } else {
                            (&zeros[..], &zeros[..])
                        };
                        self.gru_features(input, t, prev, &mut x);
                        let (c1, rest) = step.split_at_mut(l1);
                        let (c2, ch) = rest.split_at_mut(l2);
                        let h1 = gru1.step_record(&x, h1_prev, c1);
                        let h2 = gru2.step_record(h1, h2_prev, c2);
                        if input.mask[t] {
                            ch[..h].copy_from_slice(h2);
                            prev = head.forward_record(&mut ch[..head.tape_len()])[0];
                        }
                    }
                    tape.deltas[t] = prev;
                }
            }
        }
        tape.recorded = true;
        Ok(())
    }

    /// Accumulates `Σ_t grad_deltas[t]·dδ_t/dθ` into `grads`, where
    /// `grad_deltas[t]` is the partial of the objective with respect to δ_t
    /// holding the other days fixed.
    pub fn backward(&self, tape: &EpisodeTape, grad_deltas: &[f64], grads: &mut Gradient) -> Result<()> {
        if !tape.recorded {
            return Err(Error::State("backward called without a recorded forward pass".into()));
        }
        let n = tape.mask.len();
        if grad_deltas.len() != n {
            return Err(Error::shape(format!("{} delta partials for {} days", grad_deltas.len(), n)));
        }
        if tape.stride != self.stride() {
            return Err(Error::State("tape was recorded by a different policy".into()));
        }
        let expected: Vec<usize> = self.param_blocks().iter().map(|(_, b)| b.len()).collect();
        if grads.blocks.len() != expected.len() || grads.blocks.iter().zip(&expected).any(|(g, &e)| g.len() != e) {
            return Err(Error::shape("gradient does not match policy parameters"));
        }
        let stride = tape.stride;
        let mut g = grad_deltas.to_vec();
        match &self.model {
            Model::Bsm { .. } => {}
            Model::Dense { net } => {
                let mut dx = vec![0.0; net.inputs()];
                for t in (0..n).rev() {
                    if tape.mask[t] {
                        let step = &tape.buf[t * stride..(t + 1) * stride];
                        net.backward(step, &[g[t]], &mut grads.blocks, Some(&mut dx));
                        if t > 0 {
                            g[t - 1] += dx[DENSE_PREV];
                        }
                    } else if t > 0 {
                        g[t - 1] += g[t];
                    }
                }
            }
            Model::Gru { gru1, gru2, head, fallback } => {
                let w = self.config.window;
                let h = self.config.gru_hidden;
                let (l1, l2, lh) = (gru1.tape_len(), gru2.tape_len(), head.tape_len());
                let (b1, rest) = grads.blocks.split_at_mut(6);
                let (b2, rest) = rest.split_at_mut(6);
                let (bh, bf) = rest.split_at_mut(head.block_count());
                let mut gh1 = vec![0.0; h];
                let mut gh2 = vec![0.0; h];
                let mut dh1_prev = vec![0.0; h];
                let mut dh2_prev = vec![0.0; h];
                let mut dhead = vec![0.0; h];
                let mut dx2 = vec![0.0; h];
                let mut dx1 = vec![0.0; gru1.input];
                let mut dxf = vec![0.0; fallback.inputs()];
                for t in (0..n).rev() {
                    let step = &tape.buf[t * stride..(t + 1) * stride];
                    if t + 1 < w {
                        if tape.mask[t] {
                            fallback.backward(step, &[g[t]], bf, Some(&mut dxf));
                            if t > 0 {
                                g[t - 1] += dxf[DENSE_PREV];
                            }
                        } else if t > 0 {
                            g[t - 1] += g[t];
                        }
                        continue;
                    }
                    if tape.mask[t] {
                        head.backward(&step[l1 + l2..l1 + l2 + lh], &[g[t]], bh, Some(&mut dhead));
                        for (a, d) in gh2.iter_mut().zip(&dhead) {
                            *a += d;
                        }
                    } else if t > 0 {
                        g[t - 1] += g[t];
                    }
                    gru2.backward(&step[l1..l1 + l2], &gh2, b2, &mut dx2, &mut dh2_prev);
                    for (a, d) in gh1.iter_mut().zip(&dx2) {
                        *a += d;
                    }
                    gru1.backward(&step[..l1], &gh1, b1, &mut dx1, &mut dh1_prev);
                    if t > 0 {
                        g[t - 1] += dx1[w + 1];
                    }
                    std::mem::swap(&mut gh1, &mut dh1_prev);
                    std::mem::swap(&mut gh2, &mut dh2_prev);
                }
            }
        }
        Ok(())
    }
}

fn prefixed<'a>(prefix: &str, blocks: Vec<(String, &'a [f64])>) -> impl Iterator<Item = (String, &'a [f64])> + 'a {
    let prefix = prefix.to_string();
    blocks.into_iter().map(move |(n, b)| (format!("{prefix}.{n}"), b))
}

impl Parameterized for DeltaPolicy {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        match &self.model {
            Model::Bsm { .. } => Vec::new(),
            Model::Dense { net } => prefixed("dense", net.param_blocks()).collect(),
            Model::Gru { gru1, gru2, head, fallback } => prefixed("gru1", gru1.param_blocks())
                .chain(prefixed("gru2", gru2.param_blocks()))
                .chain(prefixed("head", head.param_blocks()))
                .chain(prefixed("fallback", fallback.param_blocks()))
                .collect(),
        }
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.model {
            Model::Bsm { .. } => Vec::new(),
            Model::Dense { net } => net.param_blocks_mut(),
            Model::Gru { gru1, gru2, head, fallback } => {
                let mut v = gru1.param_blocks_mut();
                v.extend(gru2.param_blocks_mut());
                v.extend(head.param_blocks_mut());
                v.extend(fallback.param_blocks_mut());
                v
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsm::ContractSpec;
    use crate::hedging::accounting::{loss_gradient, termination_loss, CostModel};
    use crate::hedging::mask::fill_mask_row;
    use crate::hedging::risk::{entropy_risk, entropy_risk_with_weights, RiskConfig};
    use crate::market_sim::{simulate_heston, HestonParams, SimConfig};
    use crate::nn::{grad_check, perturb};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input<'a>(path: &'a [f64], mask: &'a [bool], labels: Option<&'a [u8]>) -> EpisodeInput<'a> {
        EpisodeInput { path, mask, labels }
    }

    fn heston_paths(n: usize, steps: usize, seed: u64) -> Vec<Vec<f64>> {
        let cfg = SimConfig { n_paths: n, n_steps: steps, seed, ..SimConfig::default() };
        let p = simulate_heston(&HestonParams::high_vol(), &cfg).unwrap();
        p.paths().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn closed_days_carry_the_holding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for cfg in [PolicyConfig::dense(), PolicyConfig::gru()] {
            let policy = DeltaPolicy::new(&cfg, &mut rng).unwrap();
            let path = &heston_paths(1, 30, 5)[0];
            let mut mask = vec![false; 30];
            mask[0] = true;
            let d = policy.deltas(&input(path, &mask, None)).unwrap();
            assert!(d.iter().all(|&x| x == d[0]));
            assert!(d[0] > 0.0 && d[0] < 1.0);
        }
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cfg in [PolicyConfig::dense(), PolicyConfig::gru()] {
            let mut policy = DeltaPolicy::new(&cfg, &mut rng).unwrap();
            policy.zero_output_layer();
            let path = &heston_paths(1, 30, 6)[0];
            let d = policy.deltas(&input(path, &[true; 30], None)).unwrap();
            assert!(d.iter().all(|&x| x == 0.5));
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = DeltaPolicy::new(&PolicyConfig::gru(), &mut rng).unwrap();
        let path = &heston_paths(1, 30, 7)[0];
        let a = policy.deltas(&input(path, &[true; 30], None)).unwrap();
        let b = policy.deltas(&input(path, &[true; 30], None)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_initialisation_is_reproducible() {
        let a = DeltaPolicy::new(&PolicyConfig::gru(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = DeltaPolicy::new(&PolicyConfig::gru(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_and_state_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PolicyConfig { include_label: true, ..PolicyConfig::dense() };
        let policy = DeltaPolicy::new(&cfg, &mut rng).unwrap();
        let path = [100.0, 101.0, 99.0];
        assert!(matches!(policy.deltas(&input(&path, &[true; 3], None)), Err(Error::Shape(_))));
        assert!(matches!(policy.deltas(&input(&path, &[true; 2], None)), Err(Error::Config(_))));
        assert!(matches!(policy.deltas(&input(&path, &[true; 2], Some(&[1]))), Err(Error::Shape(_))));
        let mut g = policy.zero_gradient();
        let empty = EpisodeTape::new();
        assert!(matches!(policy.backward(&empty, &[0.0; 2], &mut g), Err(Error::State(_))));
    }

    #[test]
    fn bsm_policy_uses_remaining_maturity() {
        let dt = 1.0 / 365.0;
        let policy = DeltaPolicy::bsm(100.0, 0.5, dt);
        let path = [100.0, 103.0, 97.0];
        let d = policy.deltas(&input(&path, &[true, true], None)).unwrap();
        assert_eq!(d[0], bs_delta(100.0, 100.0, 0.0, 0.5, 2.0 * dt).unwrap());
        assert_eq!(d[1], bs_delta(103.0, 100.0, 0.0, 0.5, dt).unwrap());
        let d = policy.deltas(&input(&path, &[true, false], None)).unwrap();
        assert_eq!(d[1], d[0]);
    }

    /// Entropic risk of a batch of episodes as a function of the parameters.
    fn batch_objective(
        policy: &DeltaPolicy,
        paths: &[Vec<f64>],
        masks: &[Vec<bool>],
        labels: &[Vec<u8>],
        contract: &ContractSpec,
        cost: &CostModel,
        risk: &RiskConfig,
    ) -> f64 {
        let losses: Vec<f64> = paths
            .iter()
            .zip(masks)
            .zip(labels)
            .map(|((p, m), l)| {
                let d = policy.deltas(&input(p, m, Some(l))).unwrap();
                termination_loss(p, &d, contract, cost).unwrap()
            })
            .collect();
        entropy_risk(&losses, risk).unwrap()
    }

    fn batch_gradient(
        policy: &DeltaPolicy,
        paths: &[Vec<f64>],
        masks: &[Vec<bool>],
        labels: &[Vec<u8>],
        contract: &ContractSpec,
        cost: &CostModel,
        risk: &RiskConfig,
    ) -> Gradient {
        let mut tapes = Vec::new();
        let mut losses = Vec::new();
        for ((p, m), l) in paths.iter().zip(masks).zip(labels) {
            let mut tape = EpisodeTape::new();
            policy.forward_record(&input(p, m, Some(l)), &mut tape).unwrap();
            losses.push(termination_loss(p, tape.deltas(), contract, cost).unwrap());
            tapes.push(tape);
        }
        let (_, weights) = entropy_risk_with_weights(&losses, risk).unwrap();
        let mut g = policy.zero_gradient();
        for ((p, tape), w) in paths.iter().zip(&tapes).zip(weights) {
            let dl = loss_gradient(p, tape.deltas(), contract, cost).unwrap();
            let gd: Vec<f64> = dl.iter().map(|x| x * w).collect();
            policy.backward(tape, &gd, &mut g).unwrap();
        }
        g
    }

    type Episodes = (Vec<Vec<f64>>, Vec<Vec<bool>>, Vec<Vec<u8>>);

    fn episode_setup(n_paths: usize, steps: usize, alpha: f64, seed: u64) -> Episodes {
        let paths = heston_paths(n_paths, steps, seed);
        let masks = paths
            .iter()
            .map(|p| {
                let mut m = vec![false; steps];
                fill_mask_row(p, alpha, &mut m);
                m
            })
            .collect();
        let labels = (0..n_paths).map(|i| (0..steps).map(|t| ((i + t) % 3 != 0) as u8).collect()).collect();
        (paths, masks, labels)
    }

    #[test]
    fn dense_episode_gradient_matches_finite_differences() {
        let contract = ContractSpec { maturity_steps: 3, ..ContractSpec::default() };
        let cost = CostModel::new(0.02);
        let risk = RiskConfig::new(0.5);
        let cfg = PolicyConfig { include_change: true, include_label: true, ..PolicyConfig::dense() };
        let mut policy = DeltaPolicy::new(&cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        perturb(&mut policy, 0.05, &mut ChaCha8Rng::seed_from_u64(10));
        let (paths, masks, labels) = episode_setup(4, 3, 0.02, 21);
        let g = batch_gradient(&policy, &paths, &masks, &labels, &contract, &cost, &risk);
        let f = |p: &DeltaPolicy| batch_objective(p, &paths, &masks, &labels, &contract, &cost, &risk);
        let report = grad_check(&mut policy, f, &g, 1e-6, 1e-5).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn gru_episode_gradient_matches_finite_differences() {
        let contract = ContractSpec::default();
        let cost = CostModel::new(0.02);
        let risk = RiskConfig::new(0.5);
        let cfg = PolicyConfig { include_change: true, ..PolicyConfig::gru() };
        let mut policy = DeltaPolicy::new(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        perturb(&mut policy, 0.05, &mut ChaCha8Rng::seed_from_u64(11));
        let (paths, masks, labels) = episode_setup(2, 30, 0.03, 22);
        let g = batch_gradient(&policy, &paths, &masks, &labels, &contract, &cost, &risk);
        let f = |p: &DeltaPolicy| batch_objective(p, &paths, &masks, &labels, &contract, &cost, &risk);
        let report = grad_check(&mut policy, f, &g, 1e-6, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn small_lambda_gradient_approaches_mean_gradient() {
        let contract = ContractSpec { maturity_steps: 5, ..ContractSpec::default() };
        let cost = CostModel::new(0.03);
        let policy = DeltaPolicy::new(&PolicyConfig::dense(), &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let (paths, masks, labels) = episode_setup(6, 5, 0.0, 23);
        let g = batch_gradient(&policy, &paths, &masks, &labels, &contract, &cost, &RiskConfig::new(1e-6));

        // −mean(L): every path weighted by −1/n
        let mut m = policy.zero_gradient();
        for ((p, mk), l) in paths.iter().zip(&masks).zip(&labels) {
            let mut tape = EpisodeTape::new();
            policy.forward_record(&input(p, mk, Some(l)), &mut tape).unwrap();
            let dl = loss_gradient(p, tape.deltas(), &contract, &cost).unwrap();
            let gd: Vec<f64> = dl.iter().map(|x| -x / paths.len() as f64).collect();
            policy.backward(&tape, &gd, &mut m).unwrap();
        }
        let (a, b) = (g.flatten(), m.flatten());
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-3, "relative difference {}", diff / norm);
    }
}
