use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(f64),
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Variance-reduction regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSettings {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    s: TreeSettings,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let mean = self.mean(idx);
        self.nodes.push(Node::Leaf(mean));
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if pure || idx.len() < 2 * self.s.min_samples_leaf || self.s.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = match self.s.max_features {
            Some(k) if k < d => sample(rng, d, k).into_vec(),
            _ => (0..d).collect(),
        };
        features.sort_unstable();
        let mut best = self.best_split(idx, &features);
        if best.is_none() && features.len() < d {
            // none of the drawn features can split this node
            let rest: Vec<usize> = (0..d).filter(|f| !features.contains(f)).collect();
            best = self.best_split(idx, &rest);
        }
        let Some(b) = best else { return id };
        let mut k = 0;
        for j in 0..idx.len() {
            if self.x[idx[j]][b.feature] <= b.threshold {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        l.sort_unstable();
        r.sort_unstable();
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left,
            right,
        };
        id
    }

    /// Highest variance reduction over `features` (ascending); ties keep the
    /// lowest feature, then the lowest threshold.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<Best> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let min_leaf = self.s.min_samples_leaf.max(1);
        let mut best: Option<Best> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.y[order[k]];
                let (lo, hi) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if lo == hi || k + 1 < min_leaf || n - k - 1 < min_leaf {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let right = total - left;
                let gain = left * left / nl + right * right / nr - parent;
                if best.map_or(true, |b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Best { gain, feature: f, threshold });
                }
            }
        }
        best
    }
}

impl Tree {
    pub fn fit(x: &[Vec<f64>], y: &[f64], idx: &mut [usize], s: TreeSettings, rng: &mut ChaCha8Rng) -> Tree {
        let mut b = Builder {
            x,
            y,
            s,
            nodes: Vec::new(),
        };
        idx.sort_unstable();
        b.build(idx, 0, rng);
        Tree { nodes: b.nodes }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Each tree gets its own seed, drawn up front, so the result does not
    /// depend on the order trees finish in.
    pub fn fit(x: &[Vec<f64>], y: &[f64], n_trees: usize, bootstrap: bool, s: TreeSettings, seed: u64) -> Forest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..n_trees).map(|_| rng.random()).collect();
        let n = x.len();
        let trees = seeds
            .par_iter()
            .map(|&s_t| {
                let mut r = ChaCha8Rng::seed_from_u64(s_t);
                let mut idx: Vec<usize> = if bootstrap {
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::fit(x, y, &mut idx, s, &mut r)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosted {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training mean squared error after each round.
    pub train_loss: Vec<f64>,
}

impl Boosted {
    /// Squared-loss boosting. With `subsample < 1` each round fits on a
    /// seeded random fraction of the rows.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        n_rounds: usize,
        learning_rate: f64,
        subsample: f64,
        s: TreeSettings,
        seed: u64,
    ) -> Boosted {
        let n = x.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut f = vec![base; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(n_rounds);
        let mut train_loss = Vec::with_capacity(n_rounds);
        let m = ((subsample.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n);
        for _ in 0..n_rounds {
            let resid: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let mut idx: Vec<usize> = if m < n { sample(&mut rng, n, m).into_vec() } else { (0..n).collect() };
            let tree = Tree::fit(x, &resid, &mut idx, s, &mut rng);
            for (fi, xi) in f.iter_mut().zip(x) {
                *fi += learning_rate * tree.predict_row(xi);
            }
            train_loss.push(y.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64);
            trees.push(tree);
        }
        Boosted {
            base,
            learning_rate,
            trees,
            train_loss,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}
