//! Classification trees grown by gini-gain recursive partitioning, random
//! forests over bootstrap resamples, and variable importance.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear::LinearScorer;
use crate::rng::{derive_seed, seeded, Rng};

/// Gini impurity `1 - Σ p_c²`.
pub fn gini(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("gini of all-zero class counts".into()));
    }
    Ok(gini_unchecked(class_counts))
}

fn gini_unchecked(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [usize; 2],
        /// Impurity decrease weighted by the node's share of training rows.
        decrease: f64,
    },
    Leaf {
        counts: [usize; 2],
    },
}

impl Node {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            Node::Split { counts, .. } | Node::Leaf { counts } => *counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConstraints {
    /// Minimum rows in each child of an accepted split.
    pub min_split_obs: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeConstraints {
    fn default() -> Self {
        TreeConstraints {
            min_split_obs: 2,
            max_depth: None,
        }
    }
}

/// Default complexity cost per split.
pub const DEFAULT_CP: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub features: Vec<String>,
    /// Arena; node 0 is the root.
    pub nodes: Vec<Node>,
    pub cp: f64,
    pub constraints: TreeConstraints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Best midpoint threshold per candidate feature.
    Gini,
    /// One uniform-random cutpoint per candidate feature between its node min and max.
    ExtraTrees,
}

impl std::str::FromStr for SplitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(SplitRule::Gini),
            "extratrees" => Ok(SplitRule::ExtraTrees),
            other => Err(Error::InvalidParameter(format!("unknown split rule `{other}`"))),
        }
    }
}

struct Grower<'a> {
    /// Column-major feature values.
    cols: &'a [Vec<f64>],
    y: &'a [u8],
    rule: SplitRule,
    mtry: Option<usize>,
    min_child: usize,
    max_depth: Option<usize>,
    cp: f64,
    root_n: f64,
    root_impurity: f64,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    delta: f64,
}

fn class_counts(y: &[u8], rows: &[usize]) -> [usize; 2] {
    let pos = rows.iter().filter(|&&i| y[i] == 1).count();
    [rows.len() - pos, pos]
}

impl Grower<'_> {
    fn weighted_children(&self, left: [usize; 2], right: [usize; 2]) -> f64 {
        let nl = (left[0] + left[1]) as f64;
        let nr = (right[0] + right[1]) as f64;
        (nl * gini_unchecked(&left) + nr * gini_unchecked(&right)) / (nl + nr)
    }

    fn best_midpoint(&self, f: usize, rows: &[usize], counts: [usize; 2], parent: f64) -> Option<Candidate> {
        let col = &self.cols[f];
        let mut order: Vec<(f64, u8)> = rows.iter().map(|&i| (col[i], self.y[i])).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = order.len();
        let mut left = [0usize; 2];
        let mut best: Option<Candidate> = None;
        for s in 0..n - 1 {
            left[order[s].1 as usize] += 1;
            if order[s].0 == order[s + 1].0 {
                continue;
            }
            let nl = s + 1;
            if nl < self.min_child || n - nl < self.min_child {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let delta = parent - self.weighted_children(left, right);
            if best.as_ref().is_none_or(|b| delta > b.delta) {
                best = Some(Candidate {
                    feature: f,
                    threshold: 0.5 * (order[s].0 + order[s + 1].0),
                    delta,
                });
            }
        }
        best
    }

    fn random_cut(&self, f: usize, rows: &[usize], counts: [usize; 2], parent: f64, rng: &mut Rng) -> Option<Candidate> {
        let col = &self.cols[f];
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(col[i]), hi.max(col[i]))
        });
        if lo >= hi {
            return None;
        }
        let mut cut = rng.random_range(lo..hi);
        if cut >= hi {
            cut = lo;
        }
        let mut left = [0usize; 2];
        for &i in rows {
            if col[i] <= cut {
                left[self.y[i] as usize] += 1;
            }
        }
        let nl = left[0] + left[1];
        if nl < self.min_child || rows.len() - nl < self.min_child {
            return None;
        }
        let right = [counts[0] - left[0], counts[1] - left[1]];
        Some(Candidate {
            feature: f,
            threshold: cut,
            delta: parent - self.weighted_children(left, right),
        })
    }

    fn find_split(&self, rows: &[usize], counts: [usize; 2], rng: &mut Rng) -> Option<Candidate> {
        let k = self.cols.len();
        let parent = gini_unchecked(&counts);
        let mut features: Vec<usize> = match self.mtry {
            Some(m) if m < k => sample(rng, k, m).into_vec(),
            _ => (0..k).collect(),
        };
        // Ties resolve to the lowest feature index, then the lowest threshold.
        features.sort_unstable();
        let mut best: Option<Candidate> = None;
        for f in features {
            let cand = match self.rule {
                SplitRule::Gini => self.best_midpoint(f, rows, counts, parent),
                SplitRule::ExtraTrees => self.random_cut(f, rows, counts, parent, rng),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.delta > b.delta) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// A split is kept when its impurity decrease, weighted by node share
    /// and relative to the root impurity, exceeds `cp`. At `cp = 0` any
    /// non-increasing split of an impure node is kept, which lets the tree
    /// get past zero-gain first splits such as XOR's.
    fn accept(&self, node_n: f64, delta: f64) -> bool {
        if delta < 0.0 {
            return false;
        }
        if self.cp == 0.0 {
            return true;
        }
        let relative = (node_n / self.root_n) * delta / self.root_impurity;
        relative > self.cp
    }

    fn grow(&self, rows: Vec<usize>, rng: &mut Rng) -> Vec<Node> {
        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, rows, depth)
        let mut stack = vec![(0usize, rows, 0usize)];
        nodes.push(Node::Leaf { counts: [0, 0] });
        while let Some((slot, rows, depth)) = stack.pop() {
            let counts = class_counts(self.y, &rows);
            let impure = counts[0] > 0 && counts[1] > 0;
            let depth_ok = self.max_depth.is_none_or(|d| depth < d);
            let split = if impure && depth_ok && rows.len() >= 2 * self.min_child {
                self.find_split(&rows, counts, rng)
                    .filter(|c| self.accept(rows.len() as f64, c.delta))
            } else {
                None
            };
            match split {
                None => nodes[slot] = Node::Leaf { counts },
                Some(c) => {
                    let col = &self.cols[c.feature];
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| col[i] <= c.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { counts: [0, 0] });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { counts: [0, 0] });
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                        counts,
                        decrease: c.delta * rows.len() as f64 / self.root_n,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        nodes
    }
}

fn columns(ds: &Dataset) -> Vec<Vec<f64>> {
    (0..ds.n_features()).map(|j| ds.column(j)).collect()
}

fn tree_label<'a>(ds: &'a Dataset, label: &str) -> Result<&'a [u8]> {
    let y = ds.label(label)?;
    if y.is_empty() {
        return Err(Error::Empty("tree training data".into()));
    }
    Ok(y)
}

/// Greedy CART on all features with midpoint thresholds; see
/// [`Grower::accept`] for the complexity-cost rule.
pub fn fit_cart(train: &Dataset, label: &str, cp: f64, constraints: TreeConstraints) -> Result<DecisionTree> {
    let y = tree_label(train, label)?;
    if !(cp >= 0.0) {
        return Err(Error::InvalidParameter(format!("cp {cp} must be >= 0")));
    }
    if constraints.min_split_obs == 0 {
        return Err(Error::InvalidParameter("min_split_obs must be >= 1".into()));
    }
    let cols = columns(train);
    let rows: Vec<usize> = (0..train.rows()).collect();
    let grower = Grower {
        cols: &cols,
        y,
        rule: SplitRule::Gini,
        mtry: None,
        min_child: constraints.min_split_obs,
        max_depth: constraints.max_depth,
        cp,
        root_n: rows.len() as f64,
        root_impurity: gini_unchecked(&class_counts(y, &rows)),
    };
    // Gini rule with all features consumes no randomness.
    let nodes = grower.grow(rows, &mut seeded(0));
    Ok(DecisionTree {
        features: train.feature_names(),
        nodes,
        cp,
        constraints,
    })
}

impl DecisionTree {
    fn leaf_for(&self, row: &[f64]) -> [usize; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// (majority class, positive share) for a row given in the tree's
    /// feature order. Class ties go to the negative class.
    pub fn predict_row(&self, row: &[f64]) -> (u8, f64) {
        let c = self.leaf_for(row);
        let total = (c[0] + c[1]) as f64;
        (u8::from(c[1] > c[0]), c[1] as f64 / total)
    }

    /// Routes every row of `ds` (features matched by name).
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<(u8, f64)>> {
        let k = self.features.len();
        let m = ds.aligned_matrix(&self.features)?;
        Ok((0..ds.rows()).map(|i| self.predict_row(&m[i * k..(i + 1) * k])).collect())
    }

    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict(ds)?.into_iter().map(|(_, p)| p).collect())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Indented rendering of splits and leaf counts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize, String::from("root"))];
        while let Some((at, indent, prefix)) = stack.pop() {
            let pad = "  ".repeat(indent);
            match &self.nodes[at] {
                Node::Leaf { counts } => {
                    let p = counts[1] as f64 / (counts[0] + counts[1]).max(1) as f64;
                    let _ = writeln!(out, "{pad}{prefix}: leaf n={} counts={:?} p={p:.4}", counts[0] + counts[1], counts);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    counts,
                    ..
                } => {
                    let name = &self.features[*feature];
                    let _ = writeln!(out, "{pad}{prefix}: n={} counts={:?}", counts[0] + counts[1], counts);
                    stack.push((*right, indent + 1, format!("{name} > {threshold}")));
                    stack.push((*left, indent + 1, format!("{name} <= {threshold}")));
                }
            }
        }
        out
    }

    fn split_decreases(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.features.len()];
        for n in &self.nodes {
            if let Node::Split { feature, decrease, .. } = n {
                imp[*feature] += decrease;
            }
        }
        imp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// Candidate features sampled (without replacement) at every split.
    pub mtry: usize,
    /// Minimum rows in each child of a split.
    pub min_node: usize,
    pub splitrule: SplitRule,
    pub seed: u64,
    /// Resample rows with replacement per tree. Disabling it is a test hook;
    /// it also lifts the `mtry <= k - 1` bound so a one-tree forest can
    /// collapse to plain CART.
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 100,
            mtry: 1,
            min_node: 100,
            splitrule: SplitRule::Gini,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestHyper {
    fn validate(&self, k: usize) -> Result<()> {
        let max_mtry = if self.bootstrap { k.saturating_sub(1).max(1) } else { k };
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.mtry == 0 || self.mtry > max_mtry {
            return Err(Error::InvalidParameter(format!(
                "mtry {} outside [1, {max_mtry}]",
                self.mtry
            )));
        }
        if self.min_node == 0 {
            return Err(Error::InvalidParameter("min_node must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub features: Vec<String>,
    pub trees: Vec<DecisionTree>,
    pub hyper: ForestHyper,
    pub tree_seeds: Vec<u64>,
}

/// Fits `n_trees` unpruned trees, each on its own bootstrap resample with a
/// seed derived from `hyper.seed` and the tree index. Trees are grown in
/// parallel; the result does not depend on scheduling.
pub fn fit_forest(train: &Dataset, label: &str, hyper: &ForestHyper) -> Result<Forest> {
    let y = tree_label(train, label)?;
    hyper.validate(train.n_features())?;
    let cols = columns(train);
    let n = train.rows();
    let tree_seeds: Vec<u64> = (0..hyper.n_trees).map(|t| derive_seed(hyper.seed, t as u64)).collect();
    let constraints = TreeConstraints {
        min_split_obs: hyper.min_node,
        max_depth: None,
    };
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = seeded(seed);
            let rows: Vec<usize> = if hyper.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let grower = Grower {
                cols: &cols,
                y,
                rule: hyper.splitrule,
                mtry: Some(hyper.mtry),
                min_child: hyper.min_node,
                max_depth: None,
                cp: 0.0,
                root_n: rows.len() as f64,
                root_impurity: gini_unchecked(&class_counts(y, &rows)),
            };
            DecisionTree {
                features: train.feature_names(),
                nodes: grower.grow(rows, &mut rng),
                cp: 0.0,
                constraints,
            }
        })
        .collect();
    Ok(Forest {
        features: train.feature_names(),
        trees,
        hyper: hyper.clone(),
        tree_seeds,
    })
}

impl Forest {
    /// (majority-vote class, fraction of trees voting positive); an even
    /// split goes to the negative class.
    pub fn predict_row(&self, row: &[f64]) -> (u8, f64) {
        let votes = self.trees.iter().filter(|t| t.predict_row(row).0 == 1).count();
        let n = self.trees.len();
        (u8::from(2 * votes > n), votes as f64 / n as f64)
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<(u8, f64)>> {
        let k = self.features.len();
        let m = ds.aligned_matrix(&self.features)?;
        Ok((0..ds.rows())
            .into_par_iter()
            .map(|i| self.predict_row(&m[i * k..(i + 1) * k]))
            .collect())
    }

    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict(ds)?.into_iter().map(|(_, s)| s).collect())
    }
}

/// Source of unnormalized per-feature importance.
pub trait Importance {
    fn importance_features(&self) -> &[String];
    fn raw_importance(&self) -> Vec<f64>;
}

impl Importance for DecisionTree {
    fn importance_features(&self) -> &[String] {
        &self.features
    }
    fn raw_importance(&self) -> Vec<f64> {
        self.split_decreases()
    }
}

impl Importance for Forest {
    fn importance_features(&self) -> &[String] {
        &self.features
    }
    fn raw_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.features.len()];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.split_decreases()) {
                *a += v;
            }
        }
        acc
    }
}

/// |coefficient| on the standardized scale.
fn linear_importance<M: LinearScorer>(m: &M) -> Vec<f64> {
    m.coefficients()
        .iter()
        .zip(m.feature_sd())
        .map(|(b, sd)| (b * sd).abs())
        .collect()
}

impl Importance for crate::linear::LogitModel {
    fn importance_features(&self) -> &[String] {
        &self.features
    }
    fn raw_importance(&self) -> Vec<f64> {
        linear_importance(self)
    }
}

impl Importance for crate::linear::ElasticNetModel {
    fn importance_features(&self) -> &[String] {
        &self.features
    }
    fn raw_importance(&self) -> Vec<f64> {
        linear_importance(self)
    }
}

/// Per-feature weights summing to 1. A model with no attributable signal
/// (root-only tree, all-zero coefficients) gets uniform weights.
pub fn variable_importance<M: Importance + ?Sized>(model: &M) -> Result<Vec<(String, f64)>> {
    let names = model.importance_features();
    if names.is_empty() {
        return Err(Error::Empty("model has no features".into()));
    }
    let raw = model.raw_importance();
    let total: f64 = raw.iter().sum();
    let k = names.len() as f64;
    Ok(names
        .iter()
        .zip(raw)
        .map(|(n, v)| (n.clone(), if total > 0.0 { v / total } else { 1.0 / k }))
        .collect())
}
