//! Binary classification trees grown with Gini impurity, and a bagged forest
//! of them.
//!
//! Each feature is sorted once for the whole data set. A tree works on index
//! lists in that order; bootstrap draws become integer sample weights, and
//! each split partitions every list stably, so no node ever re-sorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Draw a bootstrap sample per tree; otherwise every tree sees all rows once.
    pub bootstrap: bool,
    /// Bootstrap sample size as a multiple of the row count.
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 12, min_leaf: 5, bootstrap: true, bootstrap_fraction: 1.0, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("a forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf must be at least 1"));
        }
        if self.bootstrap && !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction.is_finite()) {
            return Err(Error::config("bootstrap fraction must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Weighted training counts of class 0 and class 1.
    Leaf { counts: [u64; 2] },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return (counts[1] >= counts[0]) as u8,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Rows stored feature-major for cache-friendly scans.
#[derive(Debug, Clone)]
pub struct Dataset {
    n_rows: usize,
    n_features: usize,
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
    sorted: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn new(rows: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if rows.len() < 2 {
            return Err(Error::domain("a forest needs at least two samples"));
        }
        if rows.len() > u32::MAX as usize {
            return Err(Error::domain("too many rows"));
        }
        let n_features = rows[0].len();
        if n_features == 0 || rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::shape("feature rows must be non-empty and of equal arity"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("features must be finite"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::domain("labels must be 0 or 1"));
        }
        let columns: Vec<Vec<f64>> = (0..n_features).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Ok(Self { n_rows: rows.len(), n_features, columns, labels: labels.to_vec(), sorted })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

fn gini(c: [u64; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    data: &'a Dataset,
    weights: Vec<u32>,
    /// Per-feature index lists; a node owns the same range in each.
    lists: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    max_depth: usize,
    min_leaf: u64,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn counts(&self, range: std::ops::Range<usize>) -> [u64; 2] {
        let mut c = [0u64; 2];
        for &i in &self.lists[0][range] {
            c[self.data.labels[i as usize] as usize] += self.weights[i as usize] as u64;
        }
        c
    }

    fn best_split(&self, range: std::ops::Range<usize>, total: [u64; 2]) -> Option<BestSplit> {
        let n_total = total[0] + total[1];
        let mut best: Option<BestSplit> = None;
        for f in 0..self.data.n_features {
            let col = &self.data.columns[f];
            let list = &self.lists[f][range.clone()];
            let mut left = [0u64; 2];
            for k in 0..list.len() - 1 {
                let i = list[k] as usize;
                left[self.data.labels[i] as usize] += self.weights[i] as u64;
                let (v, next) = (col[i], col[list[k + 1] as usize]);
                if v == next {
                    continue;
                }
                let nl = left[0] + left[1];
                let nr = n_total - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = nl as f64 * gini(left) + nr as f64 * gini(right);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        best
    }

    fn grow(&mut self, range: std::ops::Range<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let total = self.counts(range.clone());
        self.nodes.push(Node::Leaf { counts: total });
        let n = total[0] + total[1];
        if depth >= self.max_depth || total[0] == 0 || total[1] == 0 || n < 2 * self.min_leaf || range.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(range.clone(), total) else {
            return id;
        };
        if split.score >= n as f64 * gini(total) - 1e-12 {
            return id;
        }

        let col = &self.data.columns[split.feature];
        for &i in &self.lists[split.feature][range.clone()] {
            self.goes_left[i as usize] = col[i as usize] <= split.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.data.n_features {
            let list = &mut self.lists[f][range.clone()];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..list.len() {
                let i = list[k];
                if self.goes_left[i as usize] {
                    list[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            list[w..].copy_from_slice(&self.scratch);
            n_left = w;
        }
        let mid = range.start + n_left;
        let left = self.grow(range.start..mid, depth + 1);
        let right = self.grow(mid..range.end, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

/// Grows one tree on the rows with non-zero `weights`.
pub fn fit_tree(data: &Dataset, weights: Vec<u32>, max_depth: usize, min_leaf: usize) -> Tree {
    let lists: Vec<Vec<u32>> =
        data.sorted.iter().map(|s| s.iter().copied().filter(|&i| weights[i as usize] > 0).collect()).collect();
    let len = lists[0].len();
    let mut g = Grower {
        data,
        weights,
        lists,
        scratch: Vec::new(),
        goes_left: vec![false; data.n_rows],
        max_depth,
        min_leaf: min_leaf as u64,
        nodes: Vec::new(),
    };
    g.grow(0..len, 0);
    Tree { nodes: g.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Bagged trees; tree `k` draws its bootstrap from stream `k` of the seed.
    pub fn fit(data: &Dataset, cfg: &ForestConfig) -> Result<Self> {
        cfg.validate()?;
        let n = data.n_rows;
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut weights = vec![0u32; n];
                if cfg.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(k as u64);
                    let draws = ((n as f64 * cfg.bootstrap_fraction).round() as usize).max(1);
                    for _ in 0..draws {
                        weights[rng.random_range(0..n)] += 1;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1);
                }
                fit_tree(data, weights, cfg.max_depth, cfg.min_leaf)
            })
            .collect();
        Ok(Self { n_features: data.n_features, trees })
    }

    /// Majority vote; ties go to class 1.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!("forest expects {} features, got {}", self.n_features, x.len())));
        }
        let ones: usize = self.trees.iter().map(|t| t.predict(x) as usize).sum();
        Ok((2 * ones >= self.trees.len()) as u8)
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tree(depth: usize, min_leaf: usize) -> ForestConfig {
        ForestConfig { n_trees: 1, max_depth: depth, min_leaf, bootstrap: false, ..ForestConfig::default() }
    }

    #[test]
    fn constant_labels_give_constant_predictions() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.01, -(i as f64)]).collect();
        for label in [0u8, 1] {
            let data = Dataset::new(&rows, &[label; 40]).unwrap();
            let f = Forest::fit(&data, &ForestConfig { n_trees: 5, ..ForestConfig::default() }).unwrap();
            assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
            assert!(f.predict_many(&rows).unwrap().iter().all(|&p| p == label));
            assert_eq!(f.predict(&[100.0, 100.0]).unwrap(), label);
        }
    }

    #[test]
    fn separable_data_is_learned_exactly() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 - 99.5) / 50.0, ((i * 37) % 11) as f64]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| (r[0] > 0.0) as u8).collect();
        let data = Dataset::new(&rows, &labels).unwrap();
        let f = Forest::fit(&data, &ForestConfig { n_trees: 7, seed: 3, ..ForestConfig::default() }).unwrap();
        assert_eq!(f.predict_many(&rows).unwrap(), labels);
    }

    #[test]
    fn stump_matches_exhaustive_search() {
        let rows = vec![vec![0.1, 3.0], vec![0.4, 1.0], vec![0.35, 2.0], vec![0.8, 4.0]];
        let labels = vec![0, 1, 0, 1];
        let data = Dataset::new(&rows, &labels).unwrap();
        let f = Forest::fit(&data, &single_tree(1, 1)).unwrap();

        let mut best = (f64::INFINITY, 0, 0.0);
        for feat in 0..2 {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[feat]).collect();
            vals.sort_by(f64::total_cmp);
            for w in vals.windows(2) {
                let thr = 0.5 * (w[0] + w[1]);
                let mut l = [0u64; 2];
                let mut r = [0u64; 2];
                for (row, &y) in rows.iter().zip(&labels) {
                    if row[feat] <= thr {
                        l[y as usize] += 1;
                    } else {
                        r[y as usize] += 1;
                    }
                }
                let s = (l[0] + l[1]) as f64 * gini(l) + (r[0] + r[1]) as f64 * gini(r);
                if s < best.0 {
                    best = (s, feat, thr);
                }
            }
        }
        match &f.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, best.1);
                assert!((threshold - best.2).abs() < 1e-15);
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert_eq!(best.2, 0.375);
    }

    #[test]
    fn regularisation_limits_are_respected() {
        let rows: Vec<Vec<f64>> =
            (0..500).map(|i| vec![((i * 7919) % 500) as f64, ((i * 104729) % 97) as f64]).collect();
        let labels: Vec<u8> = (0..500).map(|i| ((i * 31) % 7 < 3) as u8).collect();
        let data = Dataset::new(&rows, &labels).unwrap();
        let f =
            Forest::fit(&data, &ForestConfig { n_trees: 4, max_depth: 5, min_leaf: 9, seed: 1, ..Default::default() })
                .unwrap();
        for t in &f.trees {
            assert!(t.depth() <= 5);
            for n in &t.nodes {
                if let Node::Leaf { counts } = n {
                    assert!(counts[0] + counts[1] >= 9);
                }
            }
        }
    }

    #[test]
    fn fitting_is_deterministic_across_threads() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| (r[0] * r[1] > 0.1) as u8).collect();
        let data = Dataset::new(&rows, &labels).unwrap();
        let cfg = ForestConfig { n_trees: 6, seed: 42, ..ForestConfig::default() };
        let fit = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| Forest::fit(&data, &cfg).unwrap())
        };
        let a = fit(1);
        assert_eq!(a, fit(4));
        assert_eq!(a.predict_many(&rows).unwrap(), a.predict_many(&rows).unwrap());
    }

    #[test]
    fn ties_go_to_class_one() {
        let leaf = |c: u8| Tree { nodes: vec![Node::Leaf { counts: if c == 1 { [0, 3] } else { [3, 0] } }] };
        let f = Forest { n_features: 1, trees: vec![leaf(0), leaf(1)] };
        assert_eq!(f.predict(&[0.0]).unwrap(), 1);
        let even = Tree { nodes: vec![Node::Leaf { counts: [2, 2] }] };
        assert_eq!(even.predict(&[0.0]), 1);
        assert!(matches!(f.predict(&[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_inputs() {
        assert!(Dataset::new(&[vec![1.0]], &[1]).is_err());
        assert!(Dataset::new(&[vec![1.0], vec![2.0]], &[1]).is_err());
        assert!(Dataset::new(&[vec![1.0], vec![f64::NAN]], &[1, 0]).is_err());
        let data = Dataset::new(&[vec![1.0], vec![2.0]], &[1, 0]).unwrap();
        assert!(Forest::fit(&data, &ForestConfig { n_trees: 0, ..Default::default() }).is_err());
    }
}
