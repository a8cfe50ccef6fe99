//! Random forest of CART trees with Gini splits and bootstrap resampling.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub trees: usize,
    pub seed: u64,
    /// Features tried per split; `ceil(sqrt(N))` when absent.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self {
            trees: 600,
            seed: 0,
            max_features: None,
            min_samples_leaf: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn posterior(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { p } => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub dims: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean of the per-tree target posteriors.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.posterior(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [f64],
    dims: usize,
    targets: &'a [bool],
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.dims + f]
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.targets[i]).count();
        self.nodes.push(Node::Leaf {
            p: pos as f64 / idx.len() as f64,
        });
        self.nodes.len() - 1
    }

    /// Best (impurity, threshold) for one feature, or None if constant.
    fn best_split(&self, idx: &mut [usize], f: usize) -> Option<(f64, f64)> {
        idx.sort_unstable_by(|&a, &b| self.value(a, f).total_cmp(&self.value(b, f)));
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.targets[i]).count() as f64;
        let mut left_pos = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 1..n {
            left_pos += self.targets[idx[k - 1]] as u8 as f64;
            let (lo, hi) = (self.value(idx[k - 1], f), self.value(idx[k], f));
            if lo == hi || k < self.min_leaf || n - k < self.min_leaf {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let right_pos = total_pos - left_pos;
            // Weighted Gini impurity of the two children, times n.
            let gini = |pos: f64, m: f64| {
                let p = pos / m;
                m * 2.0 * p * (1.0 - p)
            };
            let impurity = gini(left_pos, nl) + gini(right_pos, nr);
            if best.map_or(true, |(b, _)| impurity < b) {
                let mid = lo + (hi - lo) / 2.0;
                // Guard against the midpoint rounding onto the upper value.
                best = Some((impurity, if mid < hi { mid } else { lo }));
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.targets[i]).count();
        if pos == 0 || pos == idx.len() || idx.len() < 2 * self.min_leaf {
            return self.leaf(idx);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for f in sample(&mut self.rng, self.dims, self.mtry).into_iter() {
            if let Some((imp, thr)) = self.best_split(idx, f) {
                if best.map_or(true, |(b, bf, _)| imp < b || (imp == b && f < bf)) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        let mut split = 0;
        for k in 0..idx.len() {
            if self.value(idx[k], feature) <= threshold {
                idx.swap(split, k);
                split += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { p: f64::NAN });
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// Trains on row-major `x` (`dims` columns). Tree `t` draws from a
/// generator seeded with `seed + t`, so results do not depend on scheduling.
pub fn train_forest(x: &[f64], dims: usize, targets: &[bool], opts: &ForestOptions) -> Result<ForestModel> {
    let n = targets.len();
    if x.len() != n * dims || dims == 0 || n == 0 {
        return Err(Error::invalid("feature matrix does not match label count"));
    }
    if opts.trees == 0 || opts.min_samples_leaf == 0 {
        return Err(Error::invalid("forest needs at least one tree and one sample per leaf"));
    }
    let pos = targets.iter().filter(|&&t| t).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    let mtry = opts.max_features.unwrap_or_else(|| (dims as f64).sqrt().ceil() as usize).clamp(1, dims);
    let trees = (0..opts.trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(t as u64));
            let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder {
                x,
                dims,
                targets,
                mtry,
                min_leaf: opts.min_samples_leaf,
                nodes: Vec::new(),
                rng,
            };
            b.grow(&mut idx);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { dims, trees })
}
