//! Accuracy, ROC AUC, the paired DeLong comparison and subject-disjoint splits.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Label;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Fraction of matching labels.
pub fn accuracy(predicted: &[Label], truth: &[Label]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction rendered as a percentage with two decimals.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", 100.0 * fraction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub instance_ids: Vec<String>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>, instance_ids: Vec<String>) -> Result<Self> {
        if scores.len() != labels.len() || labels.len() != instance_ids.len() {
            return Err(Error::contract("scores, labels and ids differ in length"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::contract("scores must be finite"));
        }
        Ok(Self {
            scores,
            labels,
            instance_ids,
        })
    }

    /// Convenience constructor numbering instances `0..n`.
    pub fn unnamed(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        Self::new(scores, labels, ids)
    }

    fn split_by_class(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let pos: Vec<f64> = self.pick(true);
        let neg: Vec<f64> = self.pick(false);
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::contract(format!(
                "AUC needs both classes, got {} pain and {} no-pain",
                pos.len(),
                neg.len()
            )));
        }
        Ok((pos, neg))
    }

    fn pick(&self, pain: bool) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.is_pain() == pain)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// 1-based ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney AUC: share of (pain, no-pain) pairs ordered correctly, ties ½.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let (pos, neg) = set.split_by_class()?;
    Ok(auc_from_classes(&pos, &neg))
}

fn auc_from_classes(pos: &[f64], neg: &[f64]) -> f64 {
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let ranks = midranks(&all);
    let p = pos.len() as f64;
    let rank_sum: f64 = ranks[..pos.len()].iter().sum();
    (rank_sum - p * (p + 1.0) / 2.0) / (p * neg.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucComparison {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
    pub z: f64,
    pub p: f64,
    pub significant: bool,
}

/// Structural components of the AUC: one value per pain instance and one per
/// no-pain instance, computed from midranks.
pub fn structural_components(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let r_all = midranks(&all);
    let r_pos = midranks(pos);
    let r_neg = midranks(neg);
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let v10 = (0..pos.len()).map(|i| (r_all[i] - r_pos[i]) / n).collect();
    let v01 = (0..neg.len())
        .map(|j| 1.0 - (r_all[pos.len() + j] - r_neg[j]) / m)
        .collect();
    (v10, v01)
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// DeLong's paired test for two score sets on the same instances.
pub fn compare_auc(a: &ScoredSet, b: &ScoredSet) -> Result<AucComparison> {
    if a.instance_ids != b.instance_ids || a.labels != b.labels {
        return Err(Error::contract(
            "paired AUC comparison needs identical instances and labels",
        ));
    }
    let (pa, na) = a.split_by_class()?;
    let (pb, nb) = b.split_by_class()?;
    if pa.len() < 2 || na.len() < 2 {
        return Err(Error::contract(
            "paired AUC comparison needs at least two instances per class",
        ));
    }
    let (m, n) = (pa.len() as f64, na.len() as f64);
    let (v10a, v01a) = structural_components(&pa, &na);
    let (v10b, v01b) = structural_components(&pb, &nb);
    let auc_a = v10a.iter().sum::<f64>() / m;
    let auc_b = v10b.iter().sum::<f64>() / m;

    let var_a = sample_cov(&v10a, &v10a) / m + sample_cov(&v01a, &v01a) / n;
    let var_b = sample_cov(&v10b, &v10b) / m + sample_cov(&v01b, &v01b) / n;
    let cov = sample_cov(&v10a, &v10b) / m + sample_cov(&v01a, &v01b) / n;
    let var = var_a + var_b - 2.0 * cov;
    let diff = auc_a - auc_b;
    let z = if var > 0.0 {
        diff / var.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok(AucComparison {
        auc_a,
        auc_b,
        var_a,
        var_b,
        cov,
        z,
        p,
        significant: p < SIGNIFICANCE_LEVEL,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn train_set(&self) -> HashSet<String> {
        self.train.iter().cloned().collect()
    }

    pub fn test_set(&self) -> HashSet<String> {
        self.test.iter().cloned().collect()
    }
}

/// Shuffles the distinct subjects with a seeded generator and sends the first
/// `ceil((1 − test_fraction) · S)` to training.
pub fn subject_split(subject_ids: &[String], test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::contract(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let unique: BTreeSet<&String> = subject_ids.iter().collect();
    let mut subjects: Vec<String> = unique.into_iter().cloned().collect();
    let s = subjects.len();
    if s < 2 {
        return Err(Error::contract(format!("need at least 2 subjects, got {s}")));
    }
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon keeps exact products such as 31 · 16/31 from rounding up
    let n_train = ((1.0 - test_fraction) * s as f64 - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= s {
        return Err(Error::contract(format!(
            "test fraction {test_fraction} leaves one side empty for {s} subjects"
        )));
    }
    let test = subjects.split_off(n_train);
    Ok(SplitPlan {
        train: subjects,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{NoPain as N, Pain as P};

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[P, N], &[P, N]).unwrap(), 1.0);
        assert_eq!(accuracy(&[P, P], &[P, N]).unwrap(), 0.5);
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.5), "50.00");
        let truth = vec![P; 3026];
        let mut pred = vec![P; 2735];
        pred.extend(vec![N; 291]);
        assert_eq!(percent(accuracy(&pred, &truth).unwrap()), "90.38");
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[P], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        let s = ScoredSet::unnamed(vec![0.1, 0.4, 0.35, 0.8], vec![N, N, P, P]).unwrap();
        assert_eq!(auc(&s).unwrap(), 0.75);
        let s = ScoredSet::unnamed(vec![0.1, 0.2, 0.9], vec![N, N, P]).unwrap();
        assert_eq!(auc(&s).unwrap(), 1.0);
        let s = ScoredSet::unnamed(vec![0.3; 5], vec![N, P, N, P, P]).unwrap();
        assert_eq!(auc(&s).unwrap(), 0.5);
        let s = ScoredSet::unnamed(vec![0.3, 0.2], vec![P, P]).unwrap();
        assert!(auc(&s).is_err());
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_sets_are_not_different() {
        let s = ScoredSet::unnamed(vec![0.1, 0.5, 0.3, 0.9, 0.2, 0.7], vec![N, P, N, P, N, P])
            .unwrap();
        let c = compare_auc(&s, &s).unwrap();
        assert_eq!(c.z, 0.0);
        assert!((c.p - 1.0).abs() < 1e-12);
        assert!(!c.significant);
    }

    #[test]
    fn swapping_negates_z() {
        let labels = vec![N, P, N, P, N, P, P, N];
        let a = ScoredSet::unnamed(vec![0.1, 0.5, 0.3, 0.9, 0.2, 0.7, 0.4, 0.6], labels.clone())
            .unwrap();
        let b = ScoredSet::unnamed(vec![0.4, 0.2, 0.1, 0.8, 0.5, 0.3, 0.9, 0.7], labels).unwrap();
        let ab = compare_auc(&a, &b).unwrap();
        let ba = compare_auc(&b, &a).unwrap();
        assert_eq!(ab.z, -ba.z);
        assert_eq!(ab.p, ba.p);
        assert!(ab.z != 0.0);
    }

    #[test]
    fn mismatched_instances_are_rejected() {
        let a = ScoredSet::unnamed(vec![0.1, 0.5, 0.2, 0.6], vec![N, P, N, P]).unwrap();
        let b = ScoredSet::unnamed(vec![0.1, 0.5, 0.2, 0.6], vec![P, P, N, N]).unwrap();
        assert!(compare_auc(&a, &b).is_err());
    }

    #[test]
    fn split_examples() {
        let ids: Vec<String> = (0..31).map(|i| format!("S{i:02}")).collect();
        for f in [15.0 / 31.0, 0.484] {
            let plan = subject_split(&ids, f, 7).unwrap();
            assert_eq!((plan.train.len(), plan.test.len()), (16, 15));
        }
        let two = vec!["a".to_string(), "b".to_string()];
        let plan = subject_split(&two, 0.5, 1).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (1, 1));
        assert_eq!(subject_split(&ids, 0.3, 9).unwrap(), subject_split(&ids, 0.3, 9).unwrap());
        assert!(subject_split(&two[..1], 0.5, 1).is_err());
        assert!(subject_split(&two, 0.01, 1).is_err());
        assert!(subject_split(&two, 1.0, 1).is_err());
    }
}
