use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        pain: bool,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, x: &[f64]) -> bool {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { pain } => return pain,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Bagged Gini trees grown until pure, sqrt(d) candidate features per split.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub width: usize,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Tree `t` draws from ChaCha8 stream `t` of `seed`, so the ensemble does
    /// not depend on how trees are scheduled across threads.
    pub fn fit(matrix: &FeatureMatrix, trees: usize, seed: u64) -> Result<Self> {
        if trees == 0 {
            return Err(Error::contract("random forest needs at least one tree"));
        }
        if matrix.is_empty() {
            return Err(Error::contract("random forest needs training rows"));
        }
        let d = matrix.width();
        let x: Vec<f64> = matrix.rows().flatten().copied().collect();
        let y: Vec<bool> = matrix.labels().iter().map(|l| l.is_pain()).collect();
        let data = Data { x: &x, y: &y, d };
        let trees = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                grow(&data, &mut rng)
            })
            .collect();
        Ok(Self { width: d, trees })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.vote(x)).count();
        votes as f64 / self.trees.len() as f64
    }
}

struct Data<'a> {
    x: &'a [f64],
    y: &'a [bool],
    d: usize,
}

impl Data<'_> {
    fn at(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.d + f]
    }
}

fn grow(data: &Data, rng: &mut ChaCha8Rng) -> Tree {
    let n = data.y.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mtry = ((data.d as f64).sqrt().floor() as usize).max(1).min(data.d.max(1));
    let mut nodes = vec![Node::Leaf { pain: false }];
    let mut stack = vec![(0usize, sample)];
    while let Some((slot, rows)) = stack.pop() {
        let pain = rows.iter().filter(|&&i| data.y[i]).count();
        let majority = Node::Leaf {
            pain: 2 * pain >= rows.len(),
        };
        if pain == 0 || pain == rows.len() || data.d == 0 {
            nodes[slot] = majority;
            continue;
        }
        let mut order: Vec<usize> = (0..data.d).collect();
        order.shuffle(rng);
        // the first mtry features are the candidates; the rest are a fallback
        // used only while every candidate is constant on this node
        let mut best: Option<(f64, usize, f64)> = None;
        for (pos, &f) in order.iter().enumerate() {
            if pos >= mtry && best.is_some() {
                break;
            }
            if let Some((gini, thr)) = best_threshold(data, &rows, f) {
                if best.is_none_or(|(g, _, _)| gini < g) {
                    best = Some((gini, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            nodes[slot] = majority;
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| data.at(i, feature) <= threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { pain: false });
        let right = nodes.len();
        nodes.push(Node::Leaf { pain: false });
        nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        stack.push((right, r));
        stack.push((left, l));
    }
    Tree { nodes }
}

/// Lowest weighted Gini over midpoints between distinct sorted values, or
/// `None` when the feature is constant on `rows`.
fn best_threshold(data: &Data, rows: &[usize], f: usize) -> Option<(f64, f64)> {
    let mut vals: Vec<(f64, bool)> = rows.iter().map(|&i| (data.at(i, f), data.y[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = vals.len();
    let total_pain = vals.iter().filter(|v| v.1).count();
    let gini = |pain: usize, count: usize| {
        if count == 0 {
            return 0.0;
        }
        let p = pain as f64 / count as f64;
        2.0 * p * (1.0 - p)
    };
    let mut best: Option<(f64, f64)> = None;
    let mut left_pain = 0;
    for k in 1..n {
        left_pain += vals[k - 1].1 as usize;
        if vals[k].0 == vals[k - 1].0 {
            continue;
        }
        let (nl, nr) = (k, n - k);
        let impurity = (nl as f64 * gini(left_pain, nl) + nr as f64 * gini(total_pain - left_pain, nr))
            / n as f64;
        let mut thr = 0.5 * (vals[k - 1].0 + vals[k].0);
        if thr >= vals[k].0 {
            thr = vals[k - 1].0;
        }
        if best.is_none_or(|(g, _)| impurity < g) {
            best = Some((impurity, thr));
        }
    }
    best
}
