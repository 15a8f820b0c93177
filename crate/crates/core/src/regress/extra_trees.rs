use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Number of candidate features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    #[default]
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, dim: usize) -> usize {
        match self {
            Self::All => dim,
            Self::Sqrt => ((dim as f64).sqrt().floor() as usize).max(1),
            Self::Count(c) => c.clamp(1, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraTreesParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            min_samples_split: 5,
            min_samples_leaf: 2,
            max_features: MaxFeatures::All,
            seed: 0,
        }
    }
}

impl ExtraTreesParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Config("n_estimators must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::Config("max_features count must be at least 1".into()));
        }
        Ok(())
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    threshold: f64,
    value: f64,
    feature: u32,
    left: u32,
    right: u32,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            threshold: 0.0,
            value,
            feature: LEAF,
            left: LEAF,
            right: LEAF,
        }
    }
}

/// Regression tree. Internal nodes send `x[feature] <= threshold` to `left`;
/// leaves carry the mean target of their samples. Serialized as parallel
/// node arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeDoc", into = "TreeDoc")]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    feature: Vec<u32>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<f64>,
}

impl TryFrom<TreeDoc> for Tree {
    type Error = Error;

    fn try_from(doc: TreeDoc) -> Result<Self> {
        let n = doc.feature.len();
        if n == 0 || [doc.threshold.len(), doc.left.len(), doc.right.len(), doc.value.len()] != [n; 4] {
            return Err(Error::Format("tree node arrays are empty or differ in length".into()));
        }
        let nodes: Vec<Node> = (0..n)
            .map(|i| Node {
                threshold: doc.threshold[i],
                value: doc.value[i],
                feature: doc.feature[i],
                left: doc.left[i],
                right: doc.right[i],
            })
            .collect();
        // children must point forward so traversal terminates
        for (i, node) in nodes.iter().enumerate() {
            if node.feature != LEAF && !(node.left as usize > i && node.right as usize > i && (node.left as usize) < n && (node.right as usize) < n) {
                return Err(Error::Format(format!("tree node {i} has invalid children")));
            }
        }
        Ok(Self { nodes })
    }
}

impl From<Tree> for TreeDoc {
    fn from(tree: Tree) -> Self {
        let n = &tree.nodes;
        Self {
            feature: n.iter().map(|x| x.feature).collect(),
            threshold: n.iter().map(|x| x.threshold).collect(),
            left: n.iter().map(|x| x.left).collect(),
            right: n.iter().map(|x| x.right).collect(),
            value: n.iter().map(|x| x.value).collect(),
        }
    }
}

impl Tree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.feature == LEAF {
                return i;
            }
            i = if x[node.feature as usize] <= node.threshold {
                node.left
            } else {
                node.right
            } as usize;
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    /// Grow one extremely randomized tree.
    pub fn grow<R: Rng>(x: &FeatureMatrix, y: &[f64], params: &ExtraTreesParams, rng: &mut R) -> Self {
        let n = y.len();
        let dim = x.dim();
        let n_candidates = params.max_features.resolve(dim);
        // node-contiguous working copies, permuted together during splits
        let mut cols: Vec<Vec<f64>> = (0..dim).map(|f| (0..n).map(|i| x.get(i, f)).collect()).collect();
        let mut ys = y.to_vec();
        let mut nodes = Vec::with_capacity(2 * n / params.min_samples_leaf.max(1) + 1);
        nodes.push(Node::leaf(ys.iter().sum::<f64>() / n as f64));
        let mut features: Vec<usize> = (0..dim).collect();
        let mut candidates = Vec::with_capacity(dim);
        // (node id, start, end)
        let mut stack = vec![(0usize, 0usize, n)];
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        while let Some((node, start, end)) = stack.pop() {
            let count = end - start;
            if count < params.min_samples_split || count < 2 * params.min_samples_leaf {
                continue;
            }
            let yn = &ys[start..end];
            if yn.iter().all(|&v| v == yn[0]) {
                continue;
            }
            for f in 0..dim {
                let (a, b) = cols[f][start..end]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                lo[f] = a;
                hi[f] = b;
            }
            // candidate features: a random subset of the non-constant ones,
            // examined in index order
            candidates.clear();
            if n_candidates >= dim {
                candidates.extend((0..dim).filter(|&f| hi[f] > lo[f]));
            } else {
                features.shuffle(rng);
                candidates.extend(features.iter().copied().filter(|&f| hi[f] > lo[f]).take(n_candidates));
                candidates.sort_unstable();
            }
            if candidates.is_empty() {
                continue;
            }
            let total: f64 = yn.iter().sum();
            let mut best: Option<(f64, usize, f64)> = None;
            for &f in &candidates {
                let cut = draw_cut(rng, lo[f], hi[f]);
                let (mut n_left, mut sum_left) = (0usize, 0.0);
                for (&v, &t) in cols[f][start..end].iter().zip(yn) {
                    if v <= cut {
                        n_left += 1;
                        sum_left += t;
                    }
                }
                let n_right = count - n_left;
                if n_left < params.min_samples_leaf || n_right < params.min_samples_leaf {
                    continue;
                }
                let sum_right = total - sum_left;
                // maximizing this proxy maximizes the variance reduction
                let score = sum_left * sum_left / n_left as f64 + sum_right * sum_right / n_right as f64;
                // candidates arrive in increasing feature order, so a strict
                // improvement keeps the lowest feature on ties
                if best.map_or(true, |(s, _, _)| score > s) {
                    best = Some((score, f, cut));
                }
            }
            let Some((_, feature, cut)) = best else {
                continue;
            };
            // partition in place: left block first
            let mut mid = start;
            for j in start..end {
                if cols[feature][j] <= cut {
                    if j != mid {
                        for col in cols.iter_mut() {
                            col.swap(mid, j);
                        }
                        ys.swap(mid, j);
                    }
                    mid += 1;
                }
            }
            let left_value = ys[start..mid].iter().sum::<f64>() / (mid - start) as f64;
            let right_value = ys[mid..end].iter().sum::<f64>() / (end - mid) as f64;
            let left = nodes.len();
            nodes.push(Node::leaf(left_value));
            nodes.push(Node::leaf(right_value));
            nodes[node] = Node {
                threshold: cut,
                value: nodes[node].value,
                feature: feature as u32,
                left: left as u32,
                right: left as u32 + 1,
            };
            // right pushed first so the left subtree is processed first
            stack.push((left + 1, mid, end));
            stack.push((left, start, mid));
        }
        Self { nodes }
    }
}

fn draw_cut<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    let cut = lo + u * (hi - lo);
    // keep at least the minimum on the left
    if cut >= hi {
        lo
    } else {
        cut
    }
}

/// Averaging ensemble of extremely randomized trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTrees {
    dim: usize,
    trees: Vec<Tree>,
}

impl ExtraTrees {
    /// Fit `params.n_estimators` trees; tree `t` draws from a stream derived
    /// from `params.seed` and `t`, so the result does not depend on threading.
    pub fn fit(params: &ExtraTreesParams, x: &FeatureMatrix, y: &[f64]) -> Result<Self> {
        params.validate()?;
        if y.is_empty() || x.n_rows() == 0 {
            return Err(Error::Empty("cannot fit a regressor on zero samples".into()));
        }
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!("{} rows but {} targets", x.n_rows(), y.len())));
        }
        let trees = (0..params.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive(params.seed, "extra-tree", t as u64));
                Tree::grow(x, y, params, &mut rng)
            })
            .collect();
        Ok(Self { dim: x.dim(), trees })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for tree in &self.trees {
            acc += tree.predict(x);
        }
        acc / self.trees.len() as f64
    }

    /// Predictions for many rows, tree by tree. Bitwise equal to calling
    /// [`ExtraTrees::predict`] on each row.
    pub fn predict_rows(&self, rows: &[&[f64]]) -> Vec<f64> {
        let mut acc = vec![0.0; rows.len()];
        for tree in &self.trees {
            for (a, row) in acc.iter_mut().zip(rows) {
                *a += tree.predict(row);
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, split: usize, leaf: usize) -> ExtraTreesParams {
        ExtraTreesParams {
            n_estimators: n,
            min_samples_split: split,
            min_samples_leaf: leaf,
            max_features: MaxFeatures::All,
            seed: 42,
        }
    }

    fn grid(n: usize) -> (FeatureMatrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let y = xs.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect();
        (FeatureMatrix::new(1, xs).unwrap(), y)
    }

    #[test]
    fn constant_targets() {
        let (x, _) = grid(50);
        let y = vec![3.25; 50];
        let model = ExtraTrees::fit(&params(10, 2, 1), &x, &y).unwrap();
        for q in [-1.0, 0.3, 7.0] {
            assert_eq!(model.predict(&[q]), 3.25);
        }
    }

    #[test]
    fn single_sample() {
        let x = FeatureMatrix::new(2, vec![0.1, 0.2]).unwrap();
        let model = ExtraTrees::fit(&params(5, 2, 1), &x, &[-4.0]).unwrap();
        assert_eq!(model.predict(&[9.0, -9.0]), -4.0);
    }

    #[test]
    fn empty_and_invalid_rejected() {
        let x = FeatureMatrix::new(1, vec![]).unwrap();
        assert!(matches!(ExtraTrees::fit(&params(5, 2, 1), &x, &[]), Err(Error::Empty(_))));
        let (x, y) = grid(4);
        assert!(ExtraTrees::fit(&params(0, 2, 1), &x, &y).is_err());
        assert!(ExtraTrees::fit(&params(1, 1, 1), &x, &y).is_err());
        assert!(ExtraTrees::fit(&params(1, 2, 0), &x, &y).is_err());
    }

    #[test]
    fn memorizes_with_pure_leaves() {
        let (x, _) = grid(64);
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let model = ExtraTrees::fit(&params(1, 2, 1), &x, &y).unwrap();
        for i in 0..64 {
            assert_eq!(model.predict(x.row(i)), y[i]);
        }
    }

    #[test]
    fn respects_min_samples_leaf() {
        let (x, y) = grid(200);
        let p = params(3, 5, 7);
        let model = ExtraTrees::fit(&p, &x, &y).unwrap();
        for tree in model.trees() {
            // every leaf is reached by at least min_samples_leaf training rows
            let mut counts = std::collections::HashMap::new();
            for i in 0..200 {
                *counts.entry(tree.leaf_index(x.row(i))).or_insert(0) += 1;
            }
            assert_eq!(counts.len(), tree.n_leaves());
            assert!(counts.values().all(|&c| c >= 7));
        }
    }

    #[test]
    fn sqrt_and_count_resolve() {
        assert_eq!(MaxFeatures::Sqrt.resolve(10), 3);
        assert_eq!(MaxFeatures::Count(20).resolve(4), 4);
        assert_eq!(MaxFeatures::All.resolve(4), 4);
    }
}
