use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, check_xy};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, ⌊p/3⌋)`.
    pub m_try: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            m_try: None,
            min_leaf: 5,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_m_try(&self, p: usize) -> usize {
        self.m_try.unwrap_or(p / 3).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        /// Training rows (bootstrap draws) that reached this leaf.
        count: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    /// Bootstrap multiplicity of each training row.
    pub in_bag: Vec<u32>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("a tree needs at least one node"));
        }
        for node in &nodes {
            if let Node::Split { left, right, .. } = *node {
                if left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::param("split child index out of range"));
                }
            }
        }
        Ok(DecisionTree { nodes, in_bag: Vec::new() })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub config: ForestConfig,
}

impl RfModel {
    pub fn from_trees(trees: Vec<DecisionTree>, n_features: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::param("a forest needs at least one tree"));
        }
        Ok(RfModel {
            trees,
            n_features,
            config: ForestConfig::default(),
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        let k = self.trees.len() as f64;
        Ok(x
            .iter_rows()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k)
            .collect())
    }

    /// Out-of-bag prediction for each training row: the mean over trees whose
    /// bootstrap sample did not contain that row; `None` if every tree saw it.
    pub fn oob_predictions(&self, x_train: &Matrix) -> Result<Vec<Option<f64>>> {
        check_width(x_train, self.n_features)?;
        if self.trees.iter().any(|t| t.in_bag.len() != x_train.rows()) {
            return Err(Error::shape(
                "oob_predictions",
                x_train.shape(),
                (self.trees[0].in_bag.len(), self.n_features),
            ));
        }
        Ok((0..x_train.rows())
            .map(|i| {
                let row = x_train.row(i);
                let (sum, count) = self
                    .trees
                    .iter()
                    .filter(|t| t.in_bag[i] == 0)
                    .fold((0.0, 0usize), |(s, c), t| (s + t.predict_row(row), c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect())
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Higher gain wins; equal gains go to the lower feature, then the lower
/// threshold.
fn better(candidate: (f64, usize, f64), best: Option<(f64, usize, f64)>) -> bool {
    match best {
        None => true,
        Some((g, f, t)) => {
            candidate.0 > g || (candidate.0 == g && (candidate.1 < f || (candidate.1 == f && candidate.2 < t)))
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    m_try: usize,
    min_leaf: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let value = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            count: rows.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, rows: &[usize], rng: &mut RngStream) -> Option<Split> {
        let p = self.x.cols();
        let mut features: Vec<usize> = (0..p).collect();
        // Partial Fisher–Yates: the first m_try entries are a uniform subset.
        for i in 0..self.m_try {
            let j = i + rng.index(p - i);
            features.swap(i, j);
        }
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for &f in &features[..self.m_try] {
            sorted.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[sorted[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let lo = self.x[(sorted[k], f)];
                let hi = self.x[(sorted[k + 1], f)];
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
                let threshold = lo + (hi - lo) / 2.0;
                if gain > 1e-12 * parent.abs().max(1e-300) && better((gain, f, threshold), best) {
                    best = Some((gain, f, threshold));
                }
            }
        }
        let (gain, feature, threshold) = best?;
        let (left, right) = rows.iter().partition(|&&i| self.x[(i, feature)] <= threshold);
        Some(Split {
            feature,
            threshold,
            gain,
            left,
            right,
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut RngStream) -> usize {
        let first = self.y[rows[0]];
        let constant = rows.iter().all(|&i| self.y[i] == first);
        if constant || depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return self.leaf(&rows);
        }
        let Some(split) = self.best_split(&rows, rng) else {
            return self.leaf(&rows);
        };
        debug_assert!(split.gain > 0.0);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
        let left = self.grow(split.left, depth + 1, rng);
        let right = self.grow(split.right, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn fit_tree(x: &Matrix, y: &[f64], cfg: &ForestConfig, m_try: usize, rng: &mut RngStream) -> DecisionTree {
    let n = x.rows();
    let mut in_bag = vec![0u32; n];
    let rows: Vec<usize> = (0..n)
        .map(|_| {
            let i = rng.index(n);
            in_bag[i] += 1;
            i
        })
        .collect();
    let mut builder = Builder {
        x,
        y,
        m_try,
        min_leaf: cfg.min_leaf,
        max_depth: cfg.max_depth.unwrap_or(usize::MAX),
        nodes: Vec::new(),
    };
    builder.grow(rows, 0, rng);
    DecisionTree {
        nodes: builder.nodes,
        in_bag,
    }
}

/// Bagged regression trees. Each tree draws a bootstrap sample of `n` rows
/// and at every node picks the best variance-reducing split among `m_try`
/// random features. Trees are fit in parallel, each from its own stream
/// derived from `cfg.seed` and the tree index, so the forest does not
/// depend on scheduling.
pub fn train_random_forest(x: &Matrix, y: &[f64], cfg: &ForestConfig) -> Result<RfModel> {
    check_xy(x, y)?;
    if x.rows() < 2 {
        return Err(Error::param("random forest needs at least 2 rows"));
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 || cfg.m_try == Some(0) || x.cols() == 0 {
        return Err(Error::param("random forest needs n_trees, min_leaf, m_try and features ≥ 1"));
    }
    let m_try = cfg.resolved_m_try(x.cols());
    let root = RngStream::new(cfg.seed);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(x, y, cfg, m_try, &mut root.derive(t as u64)))
        .collect();
    Ok(RfModel {
        trees,
        n_features: x.cols(),
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Distribution;
    use crate::supervised::rmse;

    fn uniform(seed: u64, rows: usize, cols: usize) -> Matrix {
        RngStream::new(seed).sample(Distribution::Uniform { low: -1.0, high: 1.0 }, rows, cols).unwrap()
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = uniform(1, 40, 3);
        let m = train_random_forest(&x, &[7.25; 40], &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        assert!(m.predict(&uniform(2, 15, 3)).unwrap().iter().all(|&v| v == 7.25));
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn identity_target_beats_mean_baseline() {
        let x = uniform(3, 200, 3);
        let y = x.col_values(0);
        let cfg = ForestConfig { n_trees: 50, m_try: Some(3), seed: 5, ..Default::default() };
        let m = train_random_forest(&x, &y, &cfg).unwrap();
        let xt = uniform(4, 200, 3);
        let yt = xt.col_values(0);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let baseline = rmse(&yt, &vec![mean; yt.len()]).unwrap();
        let err = rmse(&yt, &m.predict(&xt).unwrap()).unwrap();
        assert!(err < 0.5 * baseline, "{err} vs {baseline}");
    }

    #[test]
    fn every_leaf_holds_min_leaf_rows() {
        let x = uniform(5, 150, 4);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] * r[1] + r[2]).collect();
        for min_leaf in [1, 5, 12] {
            let cfg = ForestConfig { n_trees: 8, min_leaf, ..Default::default() };
            let m = train_random_forest(&x, &y, &cfg).unwrap();
            for t in &m.trees {
                assert!(t.leaves().all(|(_, c)| c >= min_leaf));
                assert_eq!(t.leaves().map(|(_, c)| c).sum::<usize>(), 150);
            }
        }
    }

    #[test]
    fn same_seed_same_forest_and_depth_cap() {
        let x = uniform(6, 80, 5);
        let y: Vec<f64> = x.iter_rows().map(|r| r.iter().sum()).collect();
        let cfg = ForestConfig { n_trees: 12, seed: 3, max_depth: Some(2), ..Default::default() };
        let a = train_random_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, train_random_forest(&x, &y, &cfg).unwrap());
        assert!(a.trees.iter().all(|t| t.depth() <= 2));
        let b = train_random_forest(&x, &y, &ForestConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn hand_built_stump_predicts_leaf_means() {
        let stump = DecisionTree::from_nodes(vec![
            Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
            Node::Leaf { value: -2.0, count: 3 },
            Node::Leaf { value: 4.0, count: 3 },
        ])
        .unwrap();
        let m = RfModel::from_trees(vec![stump], 2).unwrap();
        let x = Matrix::from_rows(&[[9.0, 0.0], [9.0, 0.5], [-9.0, 0.51], [0.0, 3.0]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![-2.0, -2.0, 4.0, 4.0]);
        assert!(matches!(m.predict(&Matrix::zeros(1, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn learned_stump_on_separable_feature_matches_group_means() {
        // Feature 0 separates the targets perfectly; feature 1 is noise.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let side = if i < 10 { 0.0 } else { 1.0 };
            rows.push([side, (i * 7 % 5) as f64]);
            y.push(if i < 10 { 1.0 + (i % 2) as f64 } else { 10.0 });
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = ForestConfig { n_trees: 1, m_try: Some(2), min_leaf: 1, max_depth: Some(1), ..Default::default() };
        let m = train_random_forest(&x, &y, &cfg).unwrap();
        let t = &m.trees[0];
        let Node::Split { feature, threshold, .. } = t.nodes[0] else { panic!("expected a split") };
        assert_eq!((feature, threshold), (0, 0.5));
        // Leaf values are the bootstrap means on each side.
        let bag = &t.in_bag;
        let side_mean = |lo: usize, hi: usize| {
            let (s, c) = (lo..hi).fold((0.0, 0u32), |(s, c), i| (s + bag[i] as f64 * y[i], c + bag[i]));
            s / c as f64
        };
        let pred = m.predict(&Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert!((pred[0] - side_mean(0, 10)).abs() < 1e-12);
        assert!((pred[1] - side_mean(10, 20)).abs() < 1e-12);
    }

    #[test]
    fn oob_never_uses_in_bag_trees() {
        let x = uniform(7, 60, 3);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0]).collect();
        let m = train_random_forest(&x, &y, &ForestConfig { n_trees: 30, ..Default::default() }).unwrap();
        let oob = m.oob_predictions(&x).unwrap();
        for (i, p) in oob.iter().enumerate() {
            let out: Vec<&DecisionTree> = m.trees.iter().filter(|t| t.in_bag[i] == 0).collect();
            match p {
                None => assert!(out.is_empty()),
                Some(v) => {
                    let expect = out.iter().map(|t| t.predict_row(x.row(i))).sum::<f64>() / out.len() as f64;
                    assert!((v - expect).abs() < 1e-12);
                }
            }
        }
        assert!(oob.iter().filter(|p| p.is_some()).count() > 50);
    }

    #[test]
    fn tie_break_prefers_lower_feature_then_threshold() {
        assert!(better((1.0, 0, 0.5), Some((1.0, 1, 0.1))));
        assert!(!better((1.0, 2, 0.5), Some((1.0, 1, 0.9))));
        assert!(better((1.0, 1, 0.2), Some((1.0, 1, 0.3))));
        assert!(better((1.1, 5, 9.0), Some((1.0, 0, 0.0))));
        // Two identical columns: the split always uses the lower index.
        let base = uniform(8, 50, 1);
        let x = base.hstack(&base).unwrap();
        let y = base.col_values(0);
        let cfg = ForestConfig { n_trees: 5, m_try: Some(2), ..Default::default() };
        let m = train_random_forest(&x, &y, &cfg).unwrap();
        for t in &m.trees {
            assert!(t.nodes.iter().all(|n| !matches!(n, Node::Split { feature: 1, .. })));
        }
    }
}
