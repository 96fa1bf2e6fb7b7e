//! Filter-style feature ranking: symmetric uncertainty and Relief-f.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Label};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_K_NEIGHBORS: usize = 10;
pub const TIE_RULE: &str = "equal scores ordered by original column index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Su,
    Relieff,
}

impl SelectionMethod {
    pub fn tag(self) -> &'static str {
        match self {
            SelectionMethod::Su => "su",
            SelectionMethod::Relieff => "relieff",
        }
    }

    /// Short label used in report tables, e.g. `SU` in `SU(10)`.
    pub fn short(self) -> &'static str {
        match self {
            SelectionMethod::Su => "SU",
            SelectionMethod::Relieff => "RF",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "su" => Ok(SelectionMethod::Su),
            "relieff" | "relief-f" | "rf" => Ok(SelectionMethod::Relieff),
            _ => Err(Error::contract(format!("unknown selection method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: SelectionMethod,
    /// `(name, score)` in descending score order.
    pub entries: Vec<(String, f64)>,
    pub tie_rule: String,
}

impl FeatureRanking {
    /// Sorts descending by score; ties keep the lower column index first.
    pub fn from_scores(method: SelectionMethod, names: &[String], scores: &[f64]) -> Result<Self> {
        if names.len() != scores.len() {
            return Err(Error::contract("ranking needs one score per feature"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite score for feature `{}`",
                names[i]
            )));
        }
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(Self {
            method,
            entries: order
                .into_iter()
                .map(|i| (names[i].clone(), scores[i]))
                .collect(),
            tie_rule: TIE_RULE.to_string(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rank", "feature", "score", "method"])?;
        for (i, (name, score)) in self.entries.iter().enumerate() {
            wr.write_record([
                (i + 1).to_string(),
                name.clone(),
                score.to_string(),
                self.method.tag().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// First `n` names of the ranking, in rank order.
pub fn select_top(ranking: &FeatureRanking, n: usize) -> Result<Vec<String>> {
    if n > ranking.entries.len() {
        return Err(Error::contract(format!(
            "cannot select {n} of {} features",
            ranking.entries.len()
        )));
    }
    Ok(ranking.entries[..n].iter().map(|(n, _)| n.clone()).collect())
}

/// Shannon entropy in bits of the empirical symbol distribution.
pub fn entropy<T: Ord>(symbols: &[T]) -> f64 {
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for s in symbols {
        *counts.entry(s).or_default() += 1;
    }
    entropy_of_counts(counts.into_values(), symbols.len())
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Equal-width binning over `[min, max]`: half-open bins, the last one closed.
pub fn discretize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::contract(format!("need at least 2 bins, got {bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("cannot discretize non-finite values"));
    }
    let (lo, hi) = min_max(values);
    if !(hi > lo) {
        return Ok(vec![0; values.len()]);
    }
    let width = (hi - lo) / bins as f64;
    Ok(values
        .iter()
        .map(|&v| (((v - lo) / width).floor() as usize).min(bins - 1))
        .collect())
}

/// `2·(H(X) + H(Y) − H(X,Y)) / (H(X) + H(Y))`, or 0 when both entropies vanish.
/// The numerator is evaluated as `Σ p(x,y)·log2(n(x,y)·N / (n(x)·n(y)))`, which
/// is exactly 0 for tables that factorise.
pub fn symmetric_uncertainty_symbols<A: Ord, B: Ord>(x: &[A], y: &[B]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract("symmetric uncertainty needs equal-length inputs"));
    }
    let mut nx: BTreeMap<&A, usize> = BTreeMap::new();
    let mut ny: BTreeMap<&B, usize> = BTreeMap::new();
    let mut nxy: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    for (a, b) in x.iter().zip(y) {
        *nx.entry(a).or_default() += 1;
        *ny.entry(b).or_default() += 1;
        *nxy.entry((a, b)).or_default() += 1;
    }
    let total = x.len();
    let hx = entropy_of_counts(nx.values().copied(), total);
    let hy = entropy_of_counts(ny.values().copied(), total);
    let denom = hx + hy;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    let n = total as f64;
    let info: f64 = nxy
        .iter()
        .map(|((a, b), &c)| {
            let ratio = (c as f64 * n) / (nx[a] as f64 * ny[b] as f64);
            c as f64 / n * ratio.log2()
        })
        .sum();
    Ok((2.0 * info / denom).clamp(0.0, 1.0))
}

/// SU between a continuous feature (discretized into `bins`) and the labels.
pub fn symmetric_uncertainty(x: &[f64], y: &[Label], bins: usize) -> Result<f64> {
    symmetric_uncertainty_symbols(&discretize(x, bins)?, y)
}

pub fn rank_su(matrix: &FeatureMatrix, bins: usize) -> Result<FeatureRanking> {
    matrix.require_both_classes()?;
    let scores = (0..matrix.width())
        .into_par_iter()
        .map(|j| symmetric_uncertainty(&matrix.column(j), matrix.labels(), bins))
        .collect::<Result<Vec<_>>>()?;
    FeatureRanking::from_scores(SelectionMethod::Su, matrix.names(), &scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleCount {
    All,
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliefParams {
    pub k_neighbors: usize,
    pub samples: SampleCount,
}

impl Default for ReliefParams {
    fn default() -> Self {
        Self {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            samples: SampleCount::All,
        }
    }
}

/// Raw Relief-f weights in column order.
pub fn relieff_weights(matrix: &FeatureMatrix, params: ReliefParams) -> Result<Vec<f64>> {
    let k = params.k_neighbors;
    if k == 0 {
        return Err(Error::contract("Relief-f needs k_neighbors ≥ 1"));
    }
    matrix.require_both_classes()?;
    let (neg, pos) = matrix.class_counts();
    if neg.min(pos) < k + 1 {
        return Err(Error::contract(format!(
            "Relief-f with k = {k} needs {} instances per class, smallest class has {}",
            k + 1,
            neg.min(pos)
        )));
    }

    let n = matrix.len();
    let d = matrix.width();
    let spans: Vec<f64> = (0..d)
        .map(|j| {
            let (lo, hi) = min_max(&matrix.column(j));
            hi - lo
        })
        .collect();
    let normalized: Vec<f64> = matrix
        .rows()
        .flat_map(|r| {
            r.iter()
                .zip(&spans)
                .map(|(v, s)| if *s > 0.0 { v / s } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    let row = |i: usize| &normalized[i * d..(i + 1) * d];
    let labels = matrix.labels();

    let sampled: Vec<usize> = match params.samples {
        SampleCount::All => (0..n).collect(),
        SampleCount::Random { count, seed } => {
            if count == 0 || count > n {
                return Err(Error::contract(format!(
                    "Relief-f sample count {count} outside 1..={n}"
                )));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(count);
            idx
        }
    };
    let scale = 1.0 / (sampled.len() * k) as f64;

    let contributions: Vec<Vec<f64>> = sampled
        .par_iter()
        .map(|&i| {
            let xi = row(i);
            let mut hits: Vec<(f64, usize)> = Vec::new();
            let mut misses: Vec<(f64, usize)> = Vec::new();
            for j in (0..n).filter(|&j| j != i) {
                let dist = xi
                    .iter()
                    .zip(row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if labels[j] == labels[i] {
                    hits.push((dist, j));
                } else {
                    misses.push((dist, j));
                }
            }
            let nearest = |v: &mut Vec<(f64, usize)>| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                v.truncate(k);
            };
            nearest(&mut hits);
            nearest(&mut misses);
            let mut delta = vec![0.0; d];
            for (f, slot) in delta.iter_mut().enumerate() {
                let diff = |j: usize| (xi[f] - normalized[j * d + f]).abs();
                let miss: f64 = misses.iter().map(|&(_, j)| diff(j)).sum();
                let hit: f64 = hits.iter().map(|&(_, j)| diff(j)).sum();
                *slot = miss * scale - hit * scale;
            }
            delta
        })
        .collect();

    let mut weights = vec![0.0; d];
    for delta in &contributions {
        for (w, c) in weights.iter_mut().zip(delta) {
            *w += c;
        }
    }
    Ok(weights)
}

pub fn relieff(matrix: &FeatureMatrix, params: ReliefParams) -> Result<FeatureRanking> {
    let w = relieff_weights(matrix, params)?;
    FeatureRanking::from_scores(SelectionMethod::Relieff, matrix.names(), &w)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}
