//! Random forest of CART trees with Gini impurity.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// candidate features per node; `None` means ⌈√D⌉
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            max_features: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Argument("n_trees must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Argument("max_features must be at least 1".into()));
        }
        Ok(())
    }

    pub fn features_per_node(&self, dim: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Distinct training points with their multiplicity.
struct Atoms<'a> {
    points: Vec<(&'a [f64], usize)>,
    weights: Vec<u64>,
}

impl<'a> Atoms<'a> {
    fn new(vectors: &'a [Vec<f64>], labels: &[usize]) -> Self {
        let mut index: BTreeMap<(Vec<u64>, usize), usize> = BTreeMap::new();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (v, &l) in vectors.iter().zip(labels) {
            let key = (v.iter().map(|x| x.to_bits()).collect(), l);
            match index.get(&key) {
                Some(&i) => weights[i] += 1,
                None => {
                    index.insert(key, points.len());
                    points.push((v.as_slice(), l));
                    weights.push(1);
                }
            }
        }
        Self { points, weights }
    }

    /// Bootstrap multiplicities: one draw per atom, each landing on an atom
    /// with probability proportional to its weight.
    fn bootstrap<R: Rng>(&self, rng: &mut R) -> Vec<u32> {
        let cumulative: Vec<u64> = self
            .weights
            .iter()
            .scan(0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().expect("non-empty") as f64;
        let n = self.points.len();
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * total;
            let i = cumulative.partition_point(|&c| (c as f64) <= u);
            counts[i.min(n - 1)] += 1;
        }
        counts
    }
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

/// Majority class; ties go to the lowest index.
pub(crate) fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a, R> {
    points: &'a [(&'a [f64], usize)],
    n_classes: usize,
    dim: usize,
    mtry: usize,
    max_depth: usize,
    rng: R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn class_counts(&self, members: &[(usize, u32)]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &(i, w) in members {
            counts[self.points[i].1] += w as f64;
        }
        counts
    }

    /// Best (gain, feature, threshold) over a random feature subset.
    fn best_split(&mut self, members: &[(usize, u32)], parent: &[f64]) -> Option<(usize, f64)> {
        let total: f64 = parent.iter().sum();
        let parent_gini = gini(parent, total);
        let candidates = rand::seq::index::sample(&mut self.rng, self.dim, self.mtry);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(usize, u32)> = members.to_vec();
        for feature in candidates.iter() {
            order.sort_by(|a, b| {
                self.points[a.0].0[feature].total_cmp(&self.points[b.0].0[feature])
            });
            let mut left = vec![0.0; self.n_classes];
            let mut n_left = 0.0;
            for k in 0..order.len() - 1 {
                let (i, w) = order[k];
                left[self.points[i].1] += w as f64;
                n_left += w as f64;
                let x = self.points[i].0[feature];
                let next = self.points[order[k + 1].0].0[feature];
                if x == next {
                    continue;
                }
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let n_right = total - n_left;
                let child = (n_left * gini(&left, n_left) + n_right * gini(&right, n_right)) / total;
                let gain = parent_gini - child;
                if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (x + next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, members: Vec<(usize, u32)>, depth: usize) -> usize {
        let counts = self.class_counts(&members);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || depth >= self.max_depth || members.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&members, &counts) else {
            return id;
        };
        let (l, r): (Vec<_>, Vec<_>) = members
            .into_iter()
            .partition(|&(i, _)| self.points[i].0[feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    n_classes: usize,
    dim: usize,
    config: ForestConfig,
    degenerate: bool,
}

impl Forest {
    /// Fit on `vectors` with labels in `0..n_classes`. A single-class training
    /// set yields a forest that always predicts that class and is flagged
    /// [`degenerate`](Self::is_degenerate).
    pub fn fit(
        vectors: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        config: &ForestConfig,
    ) -> Result<Self> {
        config.validate()?;
        if vectors.is_empty() || vectors.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} training vectors with {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Argument("training vectors must share a nonzero dimension".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Argument(format!("label {bad} with {n_classes} classes")));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite training feature".into()));
        }
        let degenerate = labels.iter().all(|&l| l == labels[0]);
        if degenerate {
            log::warn!("forest trained on a single class ({})", labels[0]);
        }

        let atoms = Atoms::new(vectors, labels);
        let mtry = config.features_per_node(dim);
        let trees = (0..config.n_trees)
            .map(|t| {
                let mut rng = rng_for(config.seed, &[0xf0e5, t as u64]);
                let counts = atoms.bootstrap(&mut rng);
                let members: Vec<(usize, u32)> = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i, c))
                    .collect();
                let mut b = Builder {
                    points: &atoms.points,
                    n_classes,
                    dim,
                    mtry,
                    max_depth: config.max_depth,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(members, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            n_classes,
            dim,
            config: config.clone(),
            degenerate,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Majority vote over trees; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::shape("forest predict", &[self.dim], &[x.len()]));
        }
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1.0;
        }
        Ok(majority(&votes))
    }
}
