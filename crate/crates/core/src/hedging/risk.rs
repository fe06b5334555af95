use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub lambda: f64,
}

impl RiskConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("risk lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Entropic risk `(1/λ)·ln mean(exp(−λ·L))` together with its partials
/// `∂ρ/∂L_i = −softmax(−λ·L)_i`.
///
/// Evaluated with a max shift and `ln_1p`/`expm1`, so it neither overflows for
/// large `λ·|L|` nor loses the first-order term as `λ → 0`.
pub fn entropy_risk_with_weights(losses: &[f64], risk: &RiskConfig) -> Result<(f64, Vec<f64>)> {
    risk.validate()?;
    if losses.is_empty() {
        return Err(Error::domain("entropic risk of an empty sample"));
    }
    let lambda = risk.lambda;
    let shift = losses.iter().map(|&l| -lambda * l).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss in entropic risk (shift {shift})")));
    }
    let n = losses.len() as f64;
    let em1: Vec<f64> = losses.iter().map(|&l| (-lambda * l - shift).exp_m1()).collect();
    let mean_em1 = em1.iter().sum::<f64>() / n;
    let rho = (shift + mean_em1.ln_1p()) / lambda;
    let denom = n * (1.0 + mean_em1);
    let weights = em1.iter().map(|&e| -(1.0 + e) / denom).collect();
    Ok((rho, weights))
}

pub fn entropy_risk(losses: &[f64], risk: &RiskConfig) -> Result<f64> {
    Ok(entropy_risk_with_weights(losses, risk)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;
    use proptest::prelude::*;

    #[test]
    fn constant_losses() {
        let r = entropy_risk(&[-3.5; 7], &RiskConfig::new(0.5)).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_distribution() {
        let r = entropy_risk(&[0.0, -1.0], &RiskConfig::new(1.0)).unwrap();
        let want = ((1.0 + std::f64::consts::E) / 2.0).ln();
        assert!((r - want).abs() < 1e-12);
        assert!((r - 0.620115).abs() < 1e-6);
    }

    #[test]
    fn small_lambda_approaches_negative_mean() {
        let losses = [-12.0, -3.5, 0.25, -20.0, -7.75];
        let r = entropy_risk(&losses, &RiskConfig::new(1e-8)).unwrap();
        assert!((r + mean(&losses)).abs() < 1e-6);
    }

    #[test]
    fn empty_and_bad_lambda() {
        assert!(matches!(entropy_risk(&[], &RiskConfig::new(1.0)), Err(Error::Domain(_))));
        assert!(matches!(entropy_risk(&[1.0], &RiskConfig::new(0.0)), Err(Error::Config(_))));
    }

    #[test]
    fn no_overflow_for_large_losses() {
        let r = entropy_risk(&[-5000.0, -4000.0], &RiskConfig::new(1.0)).unwrap();
        assert!((r - (5000.0 + 0.5f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn weights_match_finite_differences() {
        let losses = [-1.0, -4.0, 0.5, -2.5];
        let risk = RiskConfig::new(0.7);
        let (_, w) = entropy_risk_with_weights(&losses, &risk).unwrap();
        assert!((w.iter().sum::<f64>() + 1.0).abs() < 1e-12);
        for i in 0..losses.len() {
            let mut up = losses;
            let mut dn = losses;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (entropy_risk(&up, &risk).unwrap() - entropy_risk(&dn, &risk).unwrap()) / 2e-6;
            assert!((fd - w[i]).abs() < 1e-8);
        }
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..10.0, 1..40)
    }

    proptest! {
        #[test]
        fn cash_invariance(losses in sample(), c in -20.0f64..20.0, lambda in 0.05f64..2.0) {
            let risk = RiskConfig::new(lambda);
            let shifted: Vec<f64> = losses.iter().map(|l| l + c).collect();
            let a = entropy_risk(&shifted, &risk).unwrap();
            let b = entropy_risk(&losses, &risk).unwrap() - c;
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }

        #[test]
        fn monotone_in_losses(
            losses in sample(),
            bumps in prop::collection::vec(0.0f64..5.0, 40),
            lambda in 0.05f64..2.0,
        ) {
            let risk = RiskConfig::new(lambda);
            let better: Vec<f64> = losses.iter().zip(&bumps).map(|(l, b)| l + b).collect();
            prop_assert!(entropy_risk(&better, &risk).unwrap() <= entropy_risk(&losses, &risk).unwrap() + 1e-12);
        }

        #[test]
        fn jensen_bound(losses in sample(), lambda in 0.05f64..2.0) {
            let r = entropy_risk(&losses, &RiskConfig::new(lambda)).unwrap();
            prop_assert!(r >= -mean(&losses) - 1e-10);
        }

        #[test]
        fn small_lambda_limit(losses in sample()) {
            // ρ = −E[L] + λ/2·Var(L) + O(λ²)
            let lambda = 1e-8;
            let r = entropy_risk(&losses, &RiskConfig::new(lambda)).unwrap();
            let m = mean(&losses);
            let var = losses.iter().map(|l| (l - m).powi(2)).sum::<f64>() / losses.len() as f64;
            prop_assert!((r + m - 0.5 * lambda * var).abs() <= 1e-9);
        }
    }
}
