//! CART regression trees and the two ensembles built from them.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Number of non-constant features examined per split; `None` = all.
    pub max_features: Option<usize>,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `samples` (repeats allowed, as in a
    /// bootstrap sample). Splits minimize the summed squared error of the
    /// children; thresholds sit halfway between adjacent distinct values.
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        y: &[f64],
        samples: &[usize],
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let p = x.first().map_or(0, Vec::len);
        let mut features: Vec<usize> = (0..p).collect();
        let mut idx = samples.to_vec();
        tree.grow(x, y, &mut idx, 0, params, &mut features, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow<R: Rng>(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        idx: &mut [usize],
        depth: usize,
        params: TreeParams,
        features: &mut [usize],
        rng: &mut R,
    ) -> usize {
        let node_id = self.nodes.len();
        let n = idx.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
        let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || n < 2 * params.min_leaf {
            return node_id;
        }
        let Some((feature, threshold)) = best_split(x, y, idx, params, features, rng) else {
            return node_id;
        };
        // Partition in place: left block first.
        let mut lo = 0;
        for k in 0..n {
            if x[idx[k]][feature] <= threshold {
                idx.swap(lo, k);
                lo += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(lo);
        let left = self.grow(x, y, left_idx, depth + 1, params, features, rng);
        let right = self.grow(x, y, right_idx, depth + 1, params, features, rng);
        self.nodes[node_id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_id
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn best_split<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    idx: &[usize],
    params: TreeParams,
    features: &mut [usize],
    rng: &mut R,
) -> Option<(usize, f64)> {
    let n = idx.len();
    let limit = params.max_features.unwrap_or(features.len()).max(1);
    if params.max_features.is_some() {
        features.shuffle(rng);
    }
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut examined = 0;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features.iter() {
        if examined >= limit {
            break;
        }
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        if x[order[0]][f] == x[order[n - 1]][f] {
            continue;
        }
        examined += 1;
        // Maximizing sum_L²/n_L + sum_R²/n_R is equivalent to minimizing SSE.
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]];
            let nl = k + 1;
            let nr = n - nl;
            let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
            if a == b || nl < params.min_leaf || nr < params.min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
            if best.is_none_or(|(s, _, _)| score > s) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some((score, f, threshold));
            }
        }
    }
    let parent = total * total / n as f64;
    best.filter(|(s, _, _)| *s > parent + 1e-12 * parent.abs().max(1.0))
        .map(|(_, f, t)| (f, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf: 1,
        }
    }
}

/// Bagged trees with per-split feature subsampling of ⌈p/3⌉ features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: ForestParams, seed: u64) -> Self {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        let tree_params = TreeParams {
            max_depth: None,
            min_leaf: params.min_leaf,
            max_features: Some(p.div_ceil(3).max(1)),
        };
        let mut rng = rng_from_seed(seed);
        let trees = (0..params.n_trees)
            .map(|_| {
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, &sample, tree_params, &mut rng)
            })
            .collect();
        Self { params, trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
        }
    }
}

/// Least-squares gradient boosting starting from the target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub params: BoostingParams,
    pub init: f64,
    pub trees: Vec<RegressionTree>,
}

impl GradientBoosting {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: BoostingParams) -> Self {
        let n = x.len();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut current = vec![init; n];
        let all: Vec<usize> = (0..n).collect();
        let tree_params = TreeParams {
            max_depth: Some(params.max_depth),
            min_leaf: 1,
            max_features: None,
        };
        // Never drawn from: every split examines all features.
        let mut rng = rng_from_seed(0);
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            let residuals: Vec<f64> = y.iter().zip(&current).map(|(t, c)| t - c).collect();
            let tree = RegressionTree::fit(x, &residuals, &all, tree_params, &mut rng);
            for (c, row) in current.iter_mut().zip(x) {
                *c += params.learning_rate * tree.predict(row);
            }
            trees.push(tree);
        }
        Self {
            params,
            init,
            trees,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut out = self.init;
        for t in &self.trees {
            out += self.params.learning_rate * t.predict(x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tree_interpolates_distinct_rows() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let all: Vec<usize> = (0..8).collect();
        let params = TreeParams {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        };
        let t = RegressionTree::fit(&x, &y, &all, params, &mut rng_from_seed(1));
        for (row, target) in x.iter().zip(&y) {
            assert_eq!(t.predict(row), *target);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let all: Vec<usize> = (0..64).collect();
        let params = TreeParams {
            max_depth: Some(3),
            min_leaf: 1,
            max_features: None,
        };
        let t = RegressionTree::fit(&x, &y, &all, params, &mut rng_from_seed(1));
        assert!(t.depth() <= 3);
    }

    #[test]
    fn forest_stays_inside_target_range() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 / 19.0, ((i * 7) % 4) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 5.0 * r[0] + r[1]).collect();
        let f = RandomForest::fit(
            &x,
            &y,
            ForestParams {
                n_trees: 50,
                min_leaf: 1,
            },
            3,
        );
        let (lo, hi) = (
            y.iter().cloned().fold(f64::MAX, f64::min),
            y.iter().cloned().fold(f64::MIN, f64::max),
        );
        for probe in [[-5.0, -5.0], [10.0, 10.0], [0.5, 1.5]] {
            let v = f.predict(&probe);
            assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn boosting_fits_training_rows() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ];
        let y = vec![0.0, 1.0, 1.0, 3.0];
        let g = GradientBoosting::fit(&x, &y, BoostingParams::default());
        for (row, t) in x.iter().zip(&y) {
            assert!((g.predict(row) - t).abs() < 1e-3);
        }
    }
}
