use crate::error::{Error, Result};
use crate::forest::LabelMatrix;
use crate::market_sim::PathSet;

/// Per-path, per-day permission to rebalance. Day 0 is always open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeMask {
    n_paths: usize,
    n_steps: usize,
    allowed: Vec<bool>,
}

impl TradeMask {
    /// A mask with every day open.
    pub fn full(n_paths: usize, n_steps: usize) -> Self {
        Self { n_paths, n_steps, allowed: vec![true; n_paths * n_steps] }
    }

    /// Only day 0 open.
    pub fn day_zero_only(n_paths: usize, n_steps: usize) -> Self {
        let mut m = Self { n_paths, n_steps, allowed: vec![false; n_paths * n_steps] };
        for i in 0..n_paths {
            m.allowed[i * n_steps] = true;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_steps = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_steps == 0 || rows.iter().any(|r| r.len() != n_steps) {
            return Err(Error::shape("mask rows must be non-empty and of equal length"));
        }
        if rows.iter().any(|r| !r[0]) {
            return Err(Error::domain("day 0 must be open in every mask row"));
        }
        Ok(Self { n_paths: rows.len(), n_steps, allowed: rows.concat() })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.allowed[i * self.n_steps..(i + 1) * self.n_steps]
    }

    pub fn get(&self, i: usize, t: usize) -> bool {
        self.allowed[i * self.n_steps + t]
    }

    pub fn count_open(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    /// Entrywise `self ⇒ other`.
    pub fn is_subset_of(&self, other: &TradeMask) -> bool {
        self.allowed.len() == other.allowed.len() && self.allowed.iter().zip(&other.allowed).all(|(&a, &b)| !a || b)
    }

    pub fn select(&self, range: std::ops::Range<usize>) -> TradeMask {
        TradeMask {
            n_paths: range.len(),
            n_steps: self.n_steps,
            allowed: self.allowed[range.start * self.n_steps..range.end * self.n_steps].to_vec(),
        }
    }

    pub(crate) fn check_against(&self, paths: &PathSet) -> Result<()> {
        if self.n_paths != paths.n_paths() || self.n_steps != paths.n_steps() {
            return Err(Error::shape(format!(
                "mask is {}×{} but paths are {}×{}",
                self.n_paths,
                self.n_steps,
                paths.n_paths(),
                paths.n_steps()
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("price-change threshold must be non-negative, got {alpha}")));
    }
    Ok(())
}

/// Writes the threshold mask for one path (`path.len() − 1` trading days).
pub fn fill_mask_row(path: &[f64], alpha: f64, out: &mut [bool]) {
    out[0] = true;
    for t in 1..out.len() {
        out[t] = (path[t] / path[t - 1] - 1.0).abs() > alpha;
    }
}

/// Open on day 0 and on every day whose one-day relative move exceeds `alpha`.
pub fn compute_trade_mask(paths: &PathSet, alpha: f64) -> Result<TradeMask> {
    check_alpha(alpha)?;
    let n = paths.n_steps();
    let mut allowed = vec![false; paths.n_paths() * n];
    for (row, path) in allowed.chunks_mut(n).zip(paths.paths()) {
        fill_mask_row(path, alpha, row);
    }
    Ok(TradeMask { n_paths: paths.n_paths(), n_steps: n, allowed })
}

/// Closes every day labelled 0; day 0 stays open.
pub fn combine_mask(mask: &TradeMask, labels: &LabelMatrix) -> Result<TradeMask> {
    if mask.n_paths != labels.n_paths() || mask.n_steps != labels.n_steps() {
        return Err(Error::shape("mask and label matrix shapes differ"));
    }
    let mut out = mask.clone();
    for i in 0..mask.n_paths {
        let labels_row = labels.row(i);
        let row = &mut out.allowed[i * mask.n_steps..(i + 1) * mask.n_steps];
        for (open, &label) in row.iter_mut().zip(labels_row).skip(1) {
            *open &= label == 1;
        }
    }
    Ok(out)
}

/// Mean number of days per path whose one-day relative move exceeds `alpha`,
/// counted over all `n_steps` moves up to maturity.
pub fn average_trade_frequency(paths: &PathSet, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let total: usize = paths.paths().map(|p| p.windows(2).filter(|w| (w[1] / w[0] - 1.0).abs() > alpha).count()).sum();
    Ok(total as f64 / paths.n_paths() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_sim::{simulate_heston, HestonParams, SimConfig};
    use proptest::prelude::*;

    fn paths(n: usize, seed: u64) -> PathSet {
        let cfg = SimConfig { n_paths: n, seed, ..SimConfig::default() };
        simulate_heston(&HestonParams::high_vol(), &cfg).unwrap()
    }

    #[test]
    fn zero_threshold_opens_everything() {
        let p = paths(200, 1);
        let m = compute_trade_mask(&p, 0.0).unwrap();
        assert_eq!(m.count_open(), 200 * 30);
        assert_eq!(average_trade_frequency(&p, 0.0).unwrap(), 30.0);
    }

    #[test]
    fn huge_threshold_keeps_day_zero() {
        let p = paths(50, 2);
        let m = compute_trade_mask(&p, 10.0).unwrap();
        assert_eq!(m, TradeMask::day_zero_only(50, 30));
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let p = paths(2, 3);
        assert!(matches!(compute_trade_mask(&p, -0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn combine_with_labels() {
        let p = paths(20, 4);
        let m = compute_trade_mask(&p, 0.03).unwrap();
        let ones = LabelMatrix::filled(20, 30, 1);
        assert_eq!(combine_mask(&m, &ones).unwrap(), m);
        let zeros = LabelMatrix::filled(20, 30, 0);
        assert_eq!(combine_mask(&m, &zeros).unwrap(), TradeMask::day_zero_only(20, 30));
        let wrong = LabelMatrix::filled(19, 30, 1);
        assert!(matches!(combine_mask(&m, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn from_rows_requires_day_zero() {
        assert!(TradeMask::from_rows(&[vec![true, false], vec![false, true]]).is_err());
        let m = TradeMask::from_rows(&[vec![true, false], vec![true, true]]).unwrap();
        assert_eq!(m.count_open(), 3);
    }

    proptest! {
        #[test]
        fn monotone_in_alpha(seed in 0u64..1000, a in 0.0f64..0.15, gap in 0.0f64..0.1) {
            let p = paths(30, seed);
            let lo = compute_trade_mask(&p, a).unwrap();
            let hi = compute_trade_mask(&p, a + gap).unwrap();
            prop_assert!(hi.is_subset_of(&lo));
            prop_assert!(average_trade_frequency(&p, a + gap).unwrap() <= average_trade_frequency(&p, a).unwrap());
        }
    }
}
