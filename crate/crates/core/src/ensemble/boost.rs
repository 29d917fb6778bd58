//! Least-squares gradient boosting with depth-bounded regression trees.
//!
//! Candidate splits are the midpoints between consecutive distinct values of
//! each feature, found from per-feature histograms over exact value bins.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LEAF: u32 = u32::MAX;
/// Splits must reduce the squared error by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostParams {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_subsample")]
    pub subsample: f64,
    pub seed: u64,
}

fn default_rounds() -> usize {
    200
}
fn default_depth() -> usize {
    3
}
fn default_lr() -> f64 {
    0.1
}
fn default_subsample() -> f64 {
    0.8
}

impl BoostParams {
    pub fn with_seed(seed: u64) -> Self {
        BoostParams {
            rounds: default_rounds(),
            max_depth: default_depth(),
            learning_rate: default_lr(),
            subsample: default_subsample(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParam(format!("learning rate must be in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidParam(format!("subsample must be in (0, 1], got {}", self.subsample)));
        }
        if self.max_depth == 0 || self.max_depth > 16 {
            return Err(Error::InvalidParam(format!("tree depth must be in 1..=16, got {}", self.max_depth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Split feature, or `u32::MAX` for a leaf.
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

/// Regression tree as a node array rooted at index 0. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    fn predict_col(&self, columns: &[Vec<f64>], r: usize) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if columns[n.feature as usize][r] <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn leaf(value: f64) -> Node {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(n: &Node) -> bool {
        n.feature == LEAF
    }
}

/// Additive model `base + sum(learning_rate * tree(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Booster {
    pub n_features: usize,
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Booster {
    pub fn constant(n_features: usize, base: f64) -> Self {
        Booster {
            n_features,
            base,
            learning_rate: 1.0,
            trees: Vec::new(),
        }
    }

    /// Unclamped additive score.
    pub fn raw(&self, row: &[f64]) -> f64 {
        let mut s = self.base;
        for t in &self.trees {
            s += self.learning_rate * t.predict(row);
        }
        s
    }

    /// Risk score in `[0, 1]`.
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::CatalogMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(self.raw(row).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub booster: Booster,
    /// Clamped scores of every training row, as [`Booster::score`] returns them.
    pub train_scores: Vec<f64>,
    /// Mean squared error of the raw scores after each round, starting with
    /// the base score alone.
    pub train_loss: Vec<f64>,
    /// Labels were all one class.
    pub constant: bool,
}

struct Binned {
    /// Per feature: row -> bin.
    bins: Vec<Vec<u32>>,
    /// Per feature: sorted distinct values.
    values: Vec<Vec<f64>>,
}

fn bin_columns(columns: &[Vec<f64>]) -> Binned {
    let mut bins = Vec::with_capacity(columns.len());
    let mut values = Vec::with_capacity(columns.len());
    for col in columns {
        let mut v: Vec<f64> = col.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let b = col
            .iter()
            .map(|x| v.binary_search_by(|p| p.total_cmp(x)).expect("value present") as u32)
            .collect();
        bins.push(b);
        values.push(v);
    }
    Binned { bins, values }
}

struct Grower<'a> {
    binned: &'a Binned,
    residual: &'a [f64],
    max_depth: usize,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl Grower<'_> {
    /// Best (gain, feature, bin) where the split puts bins `0..=bin` left.
    fn best_split(&mut self, rows: &[u32]) -> Option<(f64, usize, usize)> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.residual[r as usize]).sum();
        let parent = total * total / n;
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, bins) in self.binned.bins.iter().enumerate() {
            let nb = self.binned.values[f].len();
            if nb < 2 {
                continue;
            }
            self.sums.clear();
            self.sums.resize(nb, 0.0);
            self.counts.clear();
            self.counts.resize(nb, 0);
            for &r in rows {
                let b = bins[r as usize] as usize;
                self.sums[b] += self.residual[r as usize];
                self.counts[b] += 1;
            }
            let (mut sl, mut nl) = (0.0, 0u32);
            for b in 0..nb - 1 {
                sl += self.sums[b];
                nl += self.counts[b];
                if self.counts[b] == 0 || nl == 0 {
                    continue;
                }
                let nr = rows.len() as u32 - nl;
                if nr == 0 {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize, nodes: &mut Vec<Node>) -> u32 {
        let id = nodes.len() as u32;
        let mean = rows.iter().map(|&r| self.residual[r as usize]).sum::<f64>() / rows.len() as f64;
        nodes.push(Tree::leaf(mean));
        if depth >= self.max_depth || rows.len() < 2 {
            return id;
        }
        let Some((_, f, b)) = self.best_split(&rows) else {
            return id;
        };
        // the split at `b` separates bin b from the next non-empty bin of this node
        let bins = &self.binned.bins[f];
        let next = rows
            .iter()
            .map(|&r| bins[r as usize] as usize)
            .filter(|&x| x > b)
            .min()
            .expect("right side is non-empty");
        let lo = rows.iter().map(|&r| bins[r as usize] as usize).filter(|&x| x <= b).max().expect("left side");
        let vals = &self.binned.values[f];
        let threshold = 0.5 * (vals[lo] + vals[next]);
        let (left, right): (Vec<u32>, Vec<u32>) = rows.into_iter().partition(|&r| bins[r as usize] as usize <= b);
        let l = self.grow(left, depth + 1, nodes);
        let r = self.grow(right, depth + 1, nodes);
        nodes[id as usize] = Node {
            feature: f as u32,
            threshold,
            left: l,
            right: r,
            value: mean,
        };
        id
    }
}

/// Fits on column-major features. Labels of a single class give a constant
/// model at the label rate.
pub fn fit_columns(columns: &[Vec<f64>], labels: &[bool], params: &BoostParams) -> Result<FitReport> {
    params.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::InvalidParam(format!("feature column has {} rows, labels have {n}", c.len())));
    }
    if columns.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam("features must be finite".into()));
    }
    let y: Vec<f64> = labels.iter().map(|&b| b as u8 as f64).collect();
    let pos = labels.iter().filter(|&&b| b).count();
    let base = pos as f64 / n as f64;
    if pos == 0 || pos == n {
        log::warn!("single-class labels ({pos} of {n} positive); fitting a constant model");
        let booster = Booster::constant(columns.len(), base);
        let s = base.clamp(0.0, 1.0);
        return Ok(FitReport {
            booster,
            train_scores: vec![s; n],
            train_loss: vec![mse(&y, &vec![base; n])],
            constant: true,
        });
    }

    let binned = bin_columns(columns);
    let mut raw = vec![base; n];
    let mut loss = vec![mse(&y, &raw)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let (mut sums, mut counts) = (Vec::new(), Vec::new());
    for _ in 0..params.rounds {
        for i in 0..n {
            residual[i] = y[i] - raw[i];
        }
        let mut rows: Vec<u32> = if take == n {
            (0..n as u32).collect()
        } else {
            sample(&mut rng, n, take).into_iter().map(|i| i as u32).collect()
        };
        rows.sort_unstable();
        let mut grower = Grower {
            binned: &binned,
            residual: &residual,
            max_depth: params.max_depth,
            sums: std::mem::take(&mut sums),
            counts: std::mem::take(&mut counts),
        };
        let mut nodes = Vec::new();
        grower.grow(rows, 0, &mut nodes);
        (sums, counts) = (grower.sums, grower.counts);
        if nodes.len() == 1 {
            // no split found: a lone leaf would only chase subsample noise
            loss.push(*loss.last().expect("initial loss"));
            continue;
        }
        let tree = Tree { nodes };
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.predict_col(columns, i);
        }
        loss.push(mse(&y, &raw));
        trees.push(tree);
    }
    let booster = Booster {
        n_features: columns.len(),
        base,
        learning_rate: params.learning_rate,
        trees,
    };
    Ok(FitReport {
        booster,
        train_scores: raw.iter().map(|r| r.clamp(0.0, 1.0)).collect(),
        train_loss: loss,
        constant: false,
    })
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::roc_auc;
    use rand::Rng;

    fn rows(columns: &[Vec<f64>], i: usize) -> Vec<f64> {
        columns.iter().map(|c| c[i]).collect()
    }

    fn auc_of(report: &FitReport, labels: &[bool]) -> f64 {
        roc_auc(&report.train_scores, labels).unwrap()
    }

    #[test]
    fn perfect_feature_separates_within_twenty_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
        let labels: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
        let noise: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let cols = vec![noise, x];
        let p = BoostParams { rounds: 20, ..BoostParams::with_seed(3) };
        let rep = fit_columns(&cols, &labels, &p).unwrap();
        assert_eq!(auc_of(&rep, &labels), 1.0);
    }

    #[test]
    fn xor_needs_depth_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<bool> = (0..800).map(|_| rng.random_bool(0.5)).collect();
        let b: Vec<bool> = (0..800).map(|_| rng.random_bool(0.5)).collect();
        let labels: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let cols = vec![
            a.iter().map(|&v| v as u8 as f64).collect(),
            b.iter().map(|&v| v as u8 as f64).collect(),
        ];
        let p = BoostParams { max_depth: 2, ..BoostParams::with_seed(5) };
        let rep = fit_columns(&cols, &labels, &p).unwrap();
        let auc = auc_of(&rep, &labels);
        assert!(auc >= 0.99, "{auc}");
        // brute force over the four cells agrees with the label rule
        for (x, y) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let s = rep.booster.score(&[x, y]).unwrap();
            assert_eq!(s > 0.5, (x != y), "{x}{y}: {s}");
        }
    }

    #[test]
    fn identical_features_give_the_base_rate() {
        let labels: Vec<bool> = (0..100).map(|i| i % 4 == 0).collect();
        let cols = vec![vec![0.3; 100], vec![0.7; 100]];
        let rep = fit_columns(&cols, &labels, &BoostParams::with_seed(0)).unwrap();
        for s in &rep.train_scores {
            assert!((s - 0.25).abs() < 1e-15);
        }
        assert_eq!(auc_of(&rep, &labels), 0.5);
        assert!(rep.booster.trees.is_empty());
    }

    #[test]
    fn single_class_is_constant() {
        let cols = vec![(0..50).map(|i| i as f64).collect::<Vec<_>>()];
        let rep = fit_columns(&cols, &[true; 50], &BoostParams::with_seed(0)).unwrap();
        assert!(rep.constant);
        assert_eq!(rep.booster.score(&[3.0]).unwrap(), 1.0);
        assert_eq!(rep.booster.score(&[0.0]).unwrap(), 1.0);
        assert!(matches!(rep.booster.score(&[0.0, 1.0]), Err(Error::CatalogMismatch { .. })));
    }

    fn noisy_fixture(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| (rng.random::<f64>() * 8.0).floor() / 8.0).collect()).collect();
        let labels = (0..n).map(|i| rng.random_bool((0.2 + 0.6 * cols[0][i] * cols[1][i]).min(1.0))).collect();
        (cols, labels)
    }

    #[test]
    fn stored_training_scores_reproduce_exactly() {
        let (cols, labels) = noisy_fixture(4);
        let rep = fit_columns(&cols, &labels, &BoostParams::with_seed(9)).unwrap();
        for i in 0..labels.len() {
            assert_eq!(rep.booster.score(&rows(&cols, i)).unwrap().to_bits(), rep.train_scores[i].to_bits());
        }
        assert!((0.0..=1.0).contains(&rep.booster.score(&[0.0; 4]).unwrap()));
    }

    #[test]
    fn full_sample_loss_never_increases() {
        let (cols, labels) = noisy_fixture(6);
        let p = BoostParams { subsample: 1.0, rounds: 60, ..BoostParams::with_seed(1) };
        let rep = fit_columns(&cols, &labels, &p).unwrap();
        for w in rep.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{w:?}");
        }
    }

    #[test]
    fn same_seed_same_model() {
        let (cols, labels) = noisy_fixture(7);
        let a = fit_columns(&cols, &labels, &BoostParams::with_seed(11)).unwrap();
        let b = fit_columns(&cols, &labels, &BoostParams::with_seed(11)).unwrap();
        assert_eq!(a, b);
        let c = fit_columns(&cols, &labels, &BoostParams::with_seed(12)).unwrap();
        assert_ne!(a.booster, c.booster);
    }

    #[test]
    fn shifted_features_refit_to_the_same_scores() {
        let (cols, labels) = noisy_fixture(8);
        let shifted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|x| x + 0.25).collect()).collect();
        let a = fit_columns(&cols, &labels, &BoostParams::with_seed(2)).unwrap();
        let b = fit_columns(&shifted, &labels, &BoostParams::with_seed(2)).unwrap();
        for (x, y) in a.train_scores.iter().zip(&b.train_scores) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_params_rejected() {
        let cols = vec![vec![0.0, 1.0]];
        let l = [false, true];
        for p in [
            BoostParams { learning_rate: 0.0, ..BoostParams::with_seed(0) },
            BoostParams { subsample: 1.5, ..BoostParams::with_seed(0) },
            BoostParams { max_depth: 0, ..BoostParams::with_seed(0) },
        ] {
            assert!(fit_columns(&cols, &l, &p).is_err());
        }
        assert!(fit_columns(&[vec![0.0]], &l, &BoostParams::with_seed(0)).is_err());
        assert!(fit_columns(&[], &[], &BoostParams::with_seed(0)).is_err());
    }
}
