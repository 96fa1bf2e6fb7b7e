use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Label};

/// Lazy k-nearest-neighbour model holding its training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub k: usize,
    pub width: usize,
    pub rows: Vec<f64>,
    pub labels: Vec<Label>,
}

/// Largest value strictly below one half, reported for a tied vote that
/// resolves to no-pain so that the score stays below the threshold.
const TIE_NO_PAIN: f64 = 0.499_999_999_999_999_94;

impl Knn {
    pub fn fit(matrix: &FeatureMatrix, k: usize) -> Result<Self> {
        if k == 0 || k > matrix.len() {
            return Err(Error::contract(format!(
                "kNN needs 1 ≤ k ≤ {}, got k = {k}",
                matrix.len()
            )));
        }
        Ok(Self {
            k,
            width: matrix.width(),
            rows: matrix.rows().flatten().copied().collect(),
            labels: matrix.labels().to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Training indices of the k nearest rows, nearest first (ties by index).
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let r = &self.rows[i * self.width..(i + 1) * self.width];
                let dist: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    /// Fraction of pain votes; an even split follows the nearest neighbour.
    pub fn score(&self, x: &[f64]) -> f64 {
        let nn = self.neighbours(x);
        let pain = nn.iter().filter(|&&i| self.labels[i].is_pain()).count();
        if 2 * pain == nn.len() {
            if self.labels[nn[0]].is_pain() {
                0.5
            } else {
                TIE_NO_PAIN
            }
        } else {
            pain as f64 / nn.len() as f64
        }
    }
}
