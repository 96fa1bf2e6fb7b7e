use crate::error::Result;
use crate::features::FeatureMatrix;

/// Gaussian naive Bayes; index 0 of each per-class array is no-pain, 1 is pain.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub fn fit(matrix: &FeatureMatrix) -> Result<Self> {
        matrix.require_both_classes()?;
        let d = matrix.width();
        let n = matrix.len() as f64;
        let mut counts = [0usize; 2];
        let mut means = [vec![0.0; d], vec![0.0; d]];
        for (row, label) in matrix.rows().zip(matrix.labels()) {
            let c = label.is_pain() as usize;
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..2 {
            for m in &mut means[c] {
                *m /= counts[c] as f64;
            }
        }
        let mut variances = [vec![0.0; d], vec![0.0; d]];
        for (row, label) in matrix.rows().zip(matrix.labels()) {
            let c = label.is_pain() as usize;
            for j in 0..d {
                variances[c][j] += (row[j] - means[c][j]).powi(2);
            }
        }
        for j in 0..d {
            let col = matrix.column(j);
            let mu = col.iter().sum::<f64>() / n;
            let global = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let floor = 1e-9 * (global + 1e-12);
            for c in 0..2 {
                variances[c][j] = (variances[c][j] / counts[c] as f64).max(floor);
            }
        }
        Ok(Self {
            priors: [counts[0] as f64 / n, counts[1] as f64 / n],
            means,
            variances,
        })
    }

    pub fn width(&self) -> usize {
        self.means[0].len()
    }

    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        let mut s = self.priors[c].ln();
        for ((v, m), var) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
            s += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m).powi(2) / (2.0 * var);
        }
        s
    }

    /// Posterior probability of pain.
    pub fn score(&self, x: &[f64]) -> f64 {
        let diff = self.log_joint(0, x) - self.log_joint(1, x);
        1.0 / (1.0 + diff.exp())
    }
}
