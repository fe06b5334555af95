//! Black-Scholes-Merton closed forms and the delta-hedging baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedging::{evaluate_policy, CostModel, DeltaPolicy, HedgeEpisodeResult, TradeMask};
use crate::market_sim::PathSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payoff {
    EuropeanCall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub strike: f64,
    pub maturity_steps: usize,
    pub payoff: Payoff,
}

impl Default for ContractSpec {
    fn default() -> Self {
        Self { strike: 100.0, maturity_steps: 30, payoff: Payoff::EuropeanCall }
    }
}

impl ContractSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::config("strike must be positive"));
        }
        if self.maturity_steps == 0 {
            return Err(Error::config("maturity must be at least one step"));
        }
        Ok(())
    }

    pub fn payoff(&self, terminal: f64) -> f64 {
        match self.payoff {
            Payoff::EuropeanCall => (terminal - self.strike).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsQuote {
    pub price: f64,
    pub delta: f64,
}

/// Standard normal CDF, `N(x) = erfc(−x/√2)/2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn check_inputs(spot: f64, strike: f64, vol: f64, tau: f64) -> Result<()> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return Err(Error::domain(format!("spot and strike must be positive (spot {spot}, strike {strike})")));
    }
    if !(vol >= 0.0) || !(tau >= 0.0) {
        return Err(Error::domain(format!("vol and tau must be non-negative (vol {vol}, tau {tau})")));
    }
    Ok(())
}

fn d1(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> f64 {
    ((spot / strike).ln() + (rate + 0.5 * vol * vol) * tau) / (vol * tau.sqrt())
}

pub fn bs_call_price(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> Result<f64> {
    check_inputs(spot, strike, vol, tau)?;
    let discounted = strike * (-rate * tau).exp();
    if tau == 0.0 || vol == 0.0 {
        return Ok((spot - discounted).max(0.0));
    }
    let d1 = d1(spot, strike, rate, vol, tau);
    let d2 = d1 - vol * tau.sqrt();
    Ok(spot * norm_cdf(d1) - discounted * norm_cdf(d2))
}

/// `N(d₁)`. Undefined at expiry, where the delta is a step function.
pub fn bs_delta(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> Result<f64> {
    check_inputs(spot, strike, vol, tau)?;
    if tau == 0.0 {
        return Err(Error::domain("delta is undefined at expiry"));
    }
    if vol == 0.0 {
        let forward_moneyness = spot - strike * (-rate * tau).exp();
        return Ok(if forward_moneyness > 0.0 {
            1.0
        } else if forward_moneyness < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    Ok(norm_cdf(d1(spot, strike, rate, vol, tau)))
}

pub fn bs_quote(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> Result<BsQuote> {
    Ok(BsQuote { price: bs_call_price(spot, strike, rate, vol, tau)?, delta: bs_delta(spot, strike, rate, vol, tau)? })
}

/// Delta hedging with a constant volatility on every path. On masked-in days
/// the holding is reset to the closed-form delta for the remaining maturity;
/// elsewhere it is carried over. The risk-free rate is zero.
pub fn bsm_hedge_baseline(
    paths: &PathSet,
    contract: &ContractSpec,
    cost: &CostModel,
    vol: f64,
    mask: &TradeMask,
) -> Result<HedgeEpisodeResult> {
    let policy = DeltaPolicy::bsm(contract.strike, vol, paths.dt());
    Ok(evaluate_policy(paths, &policy, mask, None, contract, cost)?.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedging::compute_trade_mask;
    use crate::market_sim::{simulate_gbm, GbmParams, SimConfig};
    use crate::stats::{mean, std_dev};

    #[test]
    fn zero_vol_atm_is_worthless() {
        assert_eq!(bs_call_price(100.0, 100.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn expiry_is_intrinsic() {
        assert_eq!(bs_call_price(200.0, 100.0, 0.0, 0.2, 0.0).unwrap(), 100.0);
        assert_eq!(bs_call_price(50.0, 100.0, 0.0, 0.2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(matches!(bs_call_price(0.0, 100.0, 0.0, 0.2, 1.0), Err(Error::Domain(_))));
        assert!(bs_call_price(100.0, -1.0, 0.0, 0.2, 1.0).is_err());
        assert!(matches!(bs_delta(100.0, 100.0, 0.0, 0.2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn deep_itm_delta_is_one() {
        let d = bs_delta(1e6, 100.0, 0.0, 0.2, 1.0).unwrap();
        assert!((1.0 - d).abs() < 1e-9);
    }

    #[test]
    fn atm_delta_hand_value() {
        // ATM with r = 0: d1 = vol·√tau/2 = 0.1, N(0.1) = 0.539827837277...
        let d = bs_delta(100.0, 100.0, 0.0, 0.2, 1.0).unwrap();
        assert!((d - 0.539_827_837_277_029).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-13);
        assert!((norm_cdf(-3.0) - 0.001_349_898_031_630_095).abs() < 1e-15);
    }

    #[test]
    fn delta_matches_finite_difference() {
        for &(spot, vol, tau) in &[(100.0, 0.2, 1.0), (90.0, 0.8944, 30.0 / 365.0), (120.0, 0.5, 0.3)] {
            let h = 1e-4 * spot;
            let up = bs_call_price(spot + h, 100.0, 0.0, vol, tau).unwrap();
            let dn = bs_call_price(spot - h, 100.0, 0.0, vol, tau).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let d = bs_delta(spot, 100.0, 0.0, vol, tau).unwrap();
            assert!((fd - d).abs() / d < 1e-6, "fd {fd} vs {d}");
        }
    }

    #[test]
    fn price_matches_monte_carlo() {
        let vol = 0.8f64.sqrt();
        let tau = 30.0 / 365.0;
        let sim = SimConfig { n_paths: 200_000, seed: 21, ..SimConfig::default() };
        let paths = simulate_gbm(&GbmParams { mu: 0.0, sigma: vol }, &sim).unwrap();
        let payoffs: Vec<f64> = paths.paths().map(|p| (p[30] - 100.0).max(0.0)).collect();
        let se = std_dev(&payoffs) / (payoffs.len() as f64).sqrt();
        let price = bs_call_price(100.0, 100.0, 0.0, vol, tau).unwrap();
        assert!((mean(&payoffs) - price).abs() < 3.0 * se, "{} vs {price}", mean(&payoffs));
    }

    #[test]
    fn monotone_convex_and_bounded() {
        let mut prev_delta = 0.0;
        let mut prices = Vec::new();
        for i in 1..400 {
            let s = i as f64 * 0.5;
            let d = bs_delta(s, 100.0, 0.0, 0.4, 0.25).unwrap();
            assert!(d >= prev_delta);
            prev_delta = d;
            let p = bs_call_price(s, 100.0, 0.0, 0.4, 0.25).unwrap();
            assert!(p >= (s - 100.0).max(0.0) - 1e-12 && p <= s);
            prices.push(p);
        }
        for w in prices.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }

    #[test]
    fn static_hedge_accounting() {
        let sim = SimConfig { n_paths: 50, seed: 3, ..SimConfig::default() };
        let paths = simulate_gbm(&GbmParams { mu: 0.0, sigma: 0.3 }, &sim).unwrap();
        let contract = ContractSpec::default();
        let cost = CostModel::new(0.01);
        // alpha = 10 leaves only day 0 open
        let mask = compute_trade_mask(&paths, 10.0).unwrap();
        let res = bsm_hedge_baseline(&paths, &contract, &cost, 0.3, &mask).unwrap();
        let d0 = bs_delta(100.0, 100.0, 0.0, 0.3, 30.0 * paths.dt()).unwrap();
        for (i, p) in paths.paths().enumerate() {
            let expected = d0 * (p[30] - p[0]) - 0.01 * d0 * p[0] - (p[30] - 100.0).max(0.0);
            assert!((res.losses[i] - expected).abs() < 1e-10);
            assert_eq!(res.trade_counts[i], 1);
        }
    }

    #[test]
    fn replication_error_shrinks_with_step() {
        let contract = ContractSpec::default();
        let cost = CostModel::new(0.0);
        let spread = |steps: usize| {
            let sim = SimConfig {
                n_paths: 4000,
                n_steps: steps,
                dt: (30.0 / 365.0) / steps as f64,
                seed: 8,
                ..SimConfig::default()
            };
            let paths = simulate_gbm(&GbmParams { mu: 0.0, sigma: 0.2 }, &sim).unwrap();
            let c = ContractSpec { maturity_steps: steps, ..contract };
            let mask = compute_trade_mask(&paths, 0.0).unwrap();
            let res = bsm_hedge_baseline(&paths, &c, &cost, 0.2, &mask).unwrap();
            std_dev(&res.losses)
        };
        let coarse = spread(30);
        let fine = spread(300);
        assert!(fine < 0.5 * coarse, "coarse {coarse} fine {fine}");
    }
}
