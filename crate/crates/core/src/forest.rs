//! Quantile regression forests.
//!
//! Trees are grown like an ordinary regression forest (bootstrap samples, `mtry` candidate
//! covariates per node, variance-reduction splits) but every leaf keeps the in-bag training
//! indices that reached it. A prediction at `x` weights each training row by how often it
//! shares a leaf with `x`, and reads quantiles off the resulting weighted empirical CDF.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::TauLevel;

/// Slack on the cumulative weight when inverting the CDF, so that e.g. ten weights of 0.1
/// reach 0.9 after nine steps despite rounding.
pub const CDF_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[var] <= threshold` go to `left`.
    Split {
        var: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// In-bag training indices of the leaf, repeated by bootstrap multiplicity.
    Leaf { samples: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    in_bag: Vec<usize>,
}

impl RegressionTree {
    /// Node arena; index 0 is the root.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn in_bag(&self) -> &[usize] {
        &self.in_bag
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Samples of the leaf that `x` falls into.
    pub fn leaf_samples(&self, x: &[f64]) -> &[usize] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    var,
                    threshold,
                    left,
                    right,
                } => id = if x[*var] <= *threshold { *left } else { *right },
                Node::Leaf { samples } => return samples,
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Forest hyper-parameters. Defaults follow the usual random-forest regression settings:
/// 500 trees, `floor(sqrt(p))` candidate covariates, minimum node size 5, bootstrap on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig::for_covariates(2)
    }
}

impl ForestConfig {
    pub fn for_covariates(p: usize) -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: ((p as f64).sqrt().floor() as usize).max(1),
            min_node_size: 5,
            bootstrap: true,
            seed: 0,
        }
    }

    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be positive"));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid("min_node_size must be positive"));
        }
        if self.mtry == 0 || self.mtry > n_covariates {
            return Err(Error::invalid(format!(
                "mtry must be in 1..={n_covariates}, got {}",
                self.mtry
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForest {
    trees: Vec<RegressionTree>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    config: ForestConfig,
    /// Training indices sorted by response, ties by index.
    order: Vec<usize>,
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    p: usize,
}

struct BestSplit {
    var: usize,
    threshold: f64,
    score: f64,
    /// Number of samples routed left once sorted by `var`.
    n_left: usize,
}

impl Grower<'_> {
    fn grow(&self, tree_index: usize) -> RegressionTree {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(tree_index as u64);
        let n = self.y.len();
        let in_bag: Vec<usize> = if self.cfg.bootstrap {
            let mut s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };

        let mut nodes = vec![Node::Leaf { samples: vec![] }];
        let mut stack = vec![(0usize, in_bag.clone())];
        while let Some((id, samples)) = stack.pop() {
            match self.best_split(&samples, &mut rng) {
                Some(split) => {
                    let mut sorted = samples;
                    sorted.sort_by(|&a, &b| {
                        self.x[a][split.var]
                            .total_cmp(&self.x[b][split.var])
                            .then(a.cmp(&b))
                    });
                    let right_samples = sorted.split_off(split.n_left);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { samples: vec![] });
                    nodes.push(Node::Leaf { samples: vec![] });
                    nodes[id] = Node::Split {
                        var: split.var,
                        threshold: split.threshold,
                        left,
                        right,
                    };
                    // Right is pushed first so the left subtree is expanded first.
                    stack.push((right, right_samples));
                    stack.push((left, sorted));
                }
                None => {
                    let mut s = samples;
                    s.sort_unstable();
                    nodes[id] = Node::Leaf { samples: s };
                }
            }
        }
        RegressionTree { nodes, in_bag }
    }

    fn best_split(&self, samples: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        if samples.len() < 2 * self.cfg.min_node_size {
            return None;
        }
        let first = self.y[samples[0]];
        if samples.iter().all(|&i| self.y[i] == first) {
            return None;
        }

        let mut vars = index::sample(rng, self.p, self.cfg.mtry).into_vec();
        vars.sort_unstable();

        let total: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let n = samples.len();
        let mut best: Option<BestSplit> = None;
        let mut sorted = samples.to_vec();
        for var in vars {
            sorted.sort_by(|&a, &b| self.x[a][var].total_cmp(&self.x[b][var]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[sorted[k]];
                let here = self.x[sorted[k]][var];
                let next = self.x[sorted[k + 1]][var];
                if here == next {
                    continue;
                }
                let n_left = (k + 1) as f64;
                let n_right = (n - k - 1) as f64;
                let right_sum = total - left_sum;
                // Maximizing this is equivalent to minimizing the children's summed
                // squared deviations from their means.
                let score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = 0.5 * (here + next);
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(BestSplit {
                        var,
                        threshold,
                        score,
                        n_left: k + 1,
                    });
                }
            }
        }
        best
    }
}

impl QuantileForest {
    /// Grows `config.n_trees` trees in parallel. Tree `t` draws from its own random stream
    /// derived from `(config.seed, t)`, so the forest does not depend on thread scheduling.
    pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[f64], config: &ForestConfig) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::invalid("cannot grow a forest on empty data"));
        }
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "{} covariate rows but {} responses",
                x.len(),
                y.len()
            )));
        }
        let p = x[0].as_ref().len();
        if p == 0 {
            return Err(Error::invalid("forest needs at least one covariate"));
        }
        config.validate(p)?;
        if x.len() < config.min_node_size {
            return Err(Error::invalid(format!(
                "forest needs at least min_node_size = {} rows, got {}",
                config.min_node_size,
                x.len()
            )));
        }
        let x: Vec<Vec<f64>> = x.iter().map(|r| r.as_ref().to_vec()).collect();
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("covariate rows have unequal lengths"));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in forest training data"));
        }

        let grower = Grower {
            x: &x,
            y,
            cfg: config,
            p,
        };
        let trees: Vec<RegressionTree> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| grower.grow(t))
            .collect();

        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        Ok(QuantileForest {
            trees,
            x,
            y: y.to_vec(),
            config: config.clone(),
            order,
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn training_responses(&self) -> &[f64] {
        &self.y
    }

    pub fn training_covariates(&self) -> &[Vec<f64>] {
        &self.x
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.x[0].len() {
            return Err(Error::invalid(format!(
                "expected {} covariates, got {}",
                self.x[0].len(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate"));
        }
        Ok(())
    }

    /// Weight of every training row in the conditional distribution at `x`.
    ///
    /// Within a tree each leaf sample gets `1 / leaf size` (bootstrap duplicates count
    /// separately); trees are averaged.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut w = vec![0.0; self.y.len()];
        let n_trees = self.trees.len() as f64;
        for tree in &self.trees {
            let leaf = tree.leaf_samples(x);
            let share = 1.0 / (leaf.len() as f64 * n_trees);
            for &i in leaf {
                w[i] += share;
            }
        }
        Ok(w)
    }

    /// `inf { y : F(y | x) >= tau }` for the weighted empirical CDF at `x`.
    pub fn predict_quantile(&self, x: &[f64], tau: TauLevel) -> Result<f64> {
        Ok(self.predict_quantiles(x, &[tau])?[0])
    }

    /// Several quantiles read off one CDF, hence non-decreasing in `tau`.
    pub fn predict_quantiles(&self, x: &[f64], taus: &[TauLevel]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        Ok(taus.iter().map(|&t| self.invert_cdf(&w, t.value())).collect())
    }

    fn invert_cdf(&self, w: &[f64], tau: f64) -> f64 {
        let mut acc = 0.0;
        for &i in &self.order {
            acc += w[i];
            if acc >= tau - CDF_TOLERANCE {
                return self.y[i];
            }
        }
        self.y[*self.order.last().expect("forest has training rows")]
    }

    /// One JSON document per tree.
    pub fn dump_trees(&self) -> Result<Vec<String>> {
        self.trees.iter().map(RegressionTree::to_json).collect()
    }
}
