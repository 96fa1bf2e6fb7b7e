use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const TAU: f64 = 1e-12;
const TOLERANCE: f64 = 1e-4;

/// Soft-margin linear SVM, `score = w·x + b` with pain on the positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    /// Dual coordinate pairs chosen by second-order working-set selection,
    /// stopping once the maximal KKT violation drops below 1e-4.
    pub fn fit(matrix: &FeatureMatrix, c: f64, max_iterations: usize) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::contract(format!("SVM needs c > 0, got {c}")));
        }
        matrix.require_both_classes()?;
        let n = matrix.len();
        let d = matrix.width();
        let x: Vec<f64> = matrix.rows().flatten().copied().collect();
        let row = |i: usize| &x[i * d..(i + 1) * d];
        let y: Vec<f64> = matrix
            .labels()
            .iter()
            .map(|l| if l.is_pain() { 1.0 } else { -1.0 })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let diag: Vec<f64> = (0..n).map(|i| dot(row(i), row(i))).collect();
        // Q_ij = y_i y_j x_i·x_j, computed on demand
        let q_row = |i: usize, out: &mut Vec<f64>| {
            out.clear();
            out.extend((0..n).map(|j| y[i] * y[j] * dot(row(i), row(j))));
        };

        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;
        let mut qi = Vec::with_capacity(n);
        let mut qj = Vec::with_capacity(n);
        let mut gap = f64::INFINITY;
        let mut converged = false;

        for _ in 0..max_iterations {
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..n {
                let cand = if y[t] > 0.0 {
                    (!upper(alpha[t])).then(|| -grad[t])
                } else {
                    (!lower(alpha[t])).then(|| grad[t])
                };
                if let Some(v) = cand {
                    if v > gmax {
                        gmax = v;
                        i_sel = Some(t);
                    }
                }
            }
            let Some(i) = i_sel else {
                converged = true;
                gap = 0.0;
                break;
            };
            q_row(i, &mut qi);

            let mut gmax2 = f64::NEG_INFINITY;
            let mut best = f64::INFINITY;
            let mut j_sel = None;
            for t in 0..n {
                let (grad_diff, quad) = if y[t] > 0.0 {
                    if lower(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(grad[t]);
                    (gmax + grad[t], diag[i] + diag[t] - 2.0 * y[i] * qi[t])
                } else {
                    if upper(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(-grad[t]);
                    (gmax - grad[t], diag[i] + diag[t] + 2.0 * y[i] * qi[t])
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj < best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
            gap = gmax + gmax2;
            let Some(j) = j_sel.filter(|_| gap >= TOLERANCE) else {
                converged = true;
                break;
            };
            q_row(j, &mut qj);

            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let quad = positive(diag[i] + diag[j] + 2.0 * qi[j]);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = positive(diag[i] + diag[j] - 2.0 * qi[j]);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += qi[t] * di + qj[t] * dj;
            }
        }
        if !converged {
            return Err(Error::Training(format!(
                "SVM did not converge within {max_iterations} iterations (violation {gap:.3e})"
            )));
        }

        // bias from free support vectors, or the midpoint of the feasible interval
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut free_sum) = (0usize, 0.0);
        for t in 0..n {
            let yg = y[t] * grad[t];
            let at_upper = upper(alpha[t]);
            let at_lower = lower(alpha[t]);
            if at_upper || at_lower {
                if (at_upper && y[t] < 0.0) || (at_lower && y[t] > 0.0) {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        };

        let mut weights = vec![0.0; d];
        for t in 0..n {
            if alpha[t] != 0.0 {
                for (w, v) in weights.iter_mut().zip(row(t)) {
                    *w += alpha[t] * y[t] * v;
                }
            }
        }
        Ok(Self {
            weights,
            bias: -rho,
        })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

fn positive(q: f64) -> f64 {
    if q > 0.0 {
        q
    } else {
        TAU
    }
}
