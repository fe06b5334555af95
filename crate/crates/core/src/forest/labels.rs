use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_sim::PathSet;

/// Which days count as "skip" days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// A peak or trough that clears both neighbours by more than β.
    #[default]
    LocalExtremum,
    /// A day continuing a move: up by more than β from yesterday and again by
    /// more than β into tomorrow, or the same downwards.
    Continuation,
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_extremum" => Ok(LabelRule::LocalExtremum),
            "continuation" => Ok(LabelRule::Continuation),
            other => Err(Error::config(format!("unknown label rule '{other}'"))),
        }
    }
}

/// 0/1 labels per path and trading day; 0 means skip the day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n_paths: usize,
    n_steps: usize,
    labels: Vec<u8>,
}

impl LabelMatrix {
    pub fn filled(n_paths: usize, n_steps: usize, value: u8) -> Self {
        Self { n_paths, n_steps, labels: vec![value; n_paths * n_steps] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_steps = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_steps == 0 || rows.iter().any(|r| r.len() != n_steps) {
            return Err(Error::shape("label rows must be non-empty and of equal length"));
        }
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::domain("labels must be 0 or 1"));
        }
        Ok(Self { n_paths: rows.len(), n_steps, labels: rows.concat() })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.labels[i * self.n_steps..(i + 1) * self.n_steps]
    }

    pub fn get(&self, i: usize, t: usize) -> u8 {
        self.labels[i * self.n_steps + t]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn count_zeros(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 0).count()
    }

    pub fn select(&self, range: std::ops::Range<usize>) -> LabelMatrix {
        LabelMatrix {
            n_paths: range.len(),
            n_steps: self.n_steps,
            labels: self.labels[range.start * self.n_steps..range.end * self.n_steps].to_vec(),
        }
    }
}

fn is_skip_day(prev: f64, cur: f64, next: f64, beta: f64, rule: LabelRule) -> bool {
    let up_in = (cur - prev) / prev > beta;
    let down_in = (prev - cur) / prev > beta;
    match rule {
        LabelRule::LocalExtremum => (up_in && (cur - next) / next > beta) || (down_in && (next - cur) / cur > beta),
        LabelRule::Continuation => (up_in && (next - cur) / cur > beta) || (down_in && (cur - next) / next > beta),
    }
}

/// One label per price; the first and last days have a missing neighbour and
/// are always 1.
pub fn label_path(path: &[f64], beta: f64, rule: LabelRule) -> Result<Vec<u8>> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("beta must be non-negative, got {beta}")));
    }
    if path.len() < 3 {
        return Err(Error::domain("labelling needs at least three prices"));
    }
    let mut out = vec![1u8; path.len()];
    for t in 1..path.len() - 1 {
        if is_skip_day(path[t - 1], path[t], path[t + 1], beta, rule) {
            out[t] = 0;
        }
    }
    Ok(out)
}

/// Local-extremum labels of one path.
pub fn label_extrema(path: &[f64], beta: f64) -> Result<Vec<u8>> {
    label_path(path, beta, LabelRule::LocalExtremum)
}

/// Labels for the trading days 0..T of every path.
pub fn label_matrix(paths: &PathSet, beta: f64, rule: LabelRule) -> Result<LabelMatrix> {
    let n = paths.n_steps();
    if n < 2 {
        return Err(Error::domain("labelling needs at least three prices"));
    }
    let mut labels = Vec::with_capacity(paths.n_paths() * n);
    for p in paths.paths() {
        labels.extend_from_slice(&label_path(p, beta, rule)?[..n]);
    }
    Ok(LabelMatrix { n_paths: paths.n_paths(), n_steps: n, labels })
}
