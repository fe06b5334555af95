//! Skip-day labelling of price paths and a random forest that forecasts the
//! labels from the two most recent log returns.

mod labels;
mod tree;

pub use labels::{label_extrema, label_matrix, label_path, LabelMatrix, LabelRule};
pub use tree::{fit_tree, Dataset, Forest, ForestConfig, Node, Tree};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_sim::PathSet;

/// First day with two past returns.
pub const FIRST_FORECAST_DAY: usize = 2;

/// `(ln(S_t/S_{t−1}), ln(S_{t−1}/S_{t−2}))`, defined from day 2.
pub fn feature_row(path: &[f64], t: usize) -> Option<[f64; 2]> {
    if t < FIRST_FORECAST_DAY || t >= path.len() {
        return None;
    }
    Some([(path[t] / path[t - 1]).ln(), (path[t - 1] / path[t - 2]).ln()])
}

/// Feature rows and target labels for every forecastable trading day.
pub fn training_rows(paths: &PathSet, labels: &LabelMatrix) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if labels.n_paths() != paths.n_paths() || labels.n_steps() != paths.n_steps() {
        return Err(Error::shape("label matrix does not match the path set"));
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (i, path) in paths.paths().enumerate() {
        for t in FIRST_FORECAST_DAY..paths.n_steps() {
            rows.push(feature_row(path, t).unwrap().to_vec());
            targets.push(labels.get(i, t));
        }
    }
    Ok((rows, targets))
}

/// Forecast labels for the trading days of every path; days without two
/// past returns are labelled 1.
pub fn predict_label_matrix(forest: &Forest, paths: &PathSet) -> Result<LabelMatrix> {
    let n = paths.n_steps();
    let rows: Vec<Vec<u8>> = (0..paths.n_paths())
        .into_par_iter()
        .map(|i| {
            let path = paths.path(i);
            (0..n)
                .map(|t| match feature_row(path, t) {
                    Some(x) => forest.predict(&x),
                    None => Ok(1),
                })
                .collect::<Result<Vec<u8>>>()
        })
        .collect::<Result<_>>()?;
    LabelMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: [[u64; 2]; 2],
    /// Share of class 1 among the true labels.
    pub prevalence: f64,
    /// Accuracy of always predicting the more frequent true class.
    pub majority_baseline: f64,
}

pub fn classification_report(predictions: &[u8], truth: &[u8]) -> Result<ClassificationReport> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("predictions and truth differ in length"));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[(t != 0) as usize][(p != 0) as usize] += 1;
    }
    let n = truth.len();
    let ratio = |num: u64| if n == 0 { 0.0 } else { num as f64 / n as f64 };
    let ones = confusion[1][0] + confusion[1][1];
    let prevalence = ratio(ones);
    Ok(ClassificationReport {
        n,
        accuracy: ratio(confusion[0][0] + confusion[1][1]),
        confusion,
        prevalence,
        majority_baseline: prevalence.max(if n == 0 { 0.0 } else { 1.0 - prevalence }),
    })
}

impl std::fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "samples            {}", self.n)?;
        writeln!(f, "accuracy           {:.4}", self.accuracy)?;
        writeln!(f, "majority baseline  {:.4}", self.majority_baseline)?;
        writeln!(f, "share of label 1   {:.4}", self.prevalence)?;
        writeln!(f, "confusion (rows = truth, cols = predicted)")?;
        writeln!(f, "         pred 0      pred 1")?;
        writeln!(f, "true 0 {:>10} {:>10}", self.confusion[0][0], self.confusion[0][1])?;
        write!(f, "true 1 {:>10} {:>10}", self.confusion[1][0], self.confusion[1][1])
    }
}

/// One line per path and trading day: `path_id,day,r1,r2,label,predicted`.
/// Returns are empty on days without two past returns.
pub fn write_label_csv<W: Write>(
    paths: &PathSet,
    truth: &LabelMatrix,
    predicted: &LabelMatrix,
    mut w: W,
) -> Result<()> {
    if truth.n_paths() != paths.n_paths()
        || predicted.n_paths() != paths.n_paths()
        || truth.n_steps() != paths.n_steps()
        || predicted.n_steps() != paths.n_steps()
    {
        return Err(Error::shape("label matrices do not match the path set"));
    }
    writeln!(w, "path_id,day,r1,r2,label,predicted")?;
    for (i, path) in paths.paths().enumerate() {
        let id = paths.ids()[i];
        for t in 0..paths.n_steps() {
            match feature_row(path, t) {
                Some([r1, r2]) => write!(w, "{id},{t},{r1:.10},{r2:.10}")?,
                None => write!(w, "{id},{t},,")?,
            }
            writeln!(w, ",{},{}", truth.get(i, t), predicted.get(i, t))?;
        }
    }
    Ok(())
}
