//! Classification metrics, AUC, stratified folds and cross-run aggregation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::argmax_rows;
use crate::popgraph::Masks;
use crate::rng::{stream, Stage};

/// Counts with class `positive` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub confusion: Confusion,
    /// Set when SEN or SPE had an empty denominator and was reported as 0.
    pub degenerate: bool,
}

/// Confusion counts and ACC/SEN/SPE for binary labels in {0, 1}.
pub fn confusion_and_rates(pred: &[usize], truth: &[usize], positive: usize) -> Result<Rates> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "confusion_and_rates",
            lhs: (pred.len(), 1),
            rhs: (truth.len(), 1),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyMask("evaluation"));
    }
    if positive > 1 {
        return Err(Error::LabelOutOfRange {
            label: positive,
            classes: 2,
        });
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        for l in [p, t] {
            if l > 1 {
                return Err(Error::LabelOutOfRange { label: l, classes: 2 });
            }
        }
        match (t == positive, p == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let sen = ratio(c.tp, c.tp + c.fn_);
    let spe = ratio(c.tn, c.tn + c.fp);
    Ok(Rates {
        acc: c.accuracy(),
        sen: sen.unwrap_or(0.0),
        spe: spe.unwrap_or(0.0),
        confusion: c,
        degenerate: sen.is_none() || spe.is_none(),
    })
}

/// Mann-Whitney AUC with mid-ranks for ties, so a tied positive/negative
/// pair contributes one half.
pub fn auc(scores: &[f64], truth: &[usize], positive: usize) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Shape {
            op: "auc",
            lhs: (scores.len(), 1),
            rhs: (truth.len(), 1),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("auc scores must be finite".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t == positive).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if truth[idx] == positive {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    /// 0 with `degenerate` set when the test set holds a single class.
    pub auc: f64,
    pub confusion: Confusion,
    pub n_test: usize,
    pub positive_class: String,
    pub degenerate: bool,
}

impl EvalReport {
    /// Scores the fused class probabilities on the nodes selected by
    /// `test_mask`. The AUC score is the positive-class probability.
    pub fn from_probs(
        probs: &Matrix,
        truth: &[usize],
        test_mask: &[bool],
        positive: usize,
        positive_class: &str,
    ) -> Result<Self> {
        if truth.len() != probs.rows() || test_mask.len() != probs.rows() {
            return Err(Error::Shape {
                op: "EvalReport::from_probs",
                lhs: probs.shape(),
                rhs: (truth.len(), test_mask.len()),
            });
        }
        if positive >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                label: positive,
                classes: probs.cols(),
            });
        }
        let idx = Masks::indices(test_mask);
        let all_pred = argmax_rows(probs);
        let pred: Vec<usize> = idx.iter().map(|&i| all_pred[i]).collect();
        let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| probs.get(i, positive)).collect();
        let rates = confusion_and_rates(&pred, &t, positive)?;
        let (auc, auc_degenerate) = match auc(&scores, &t, positive) {
            Ok(a) => (a, false),
            Err(Error::SingleClass { .. }) => (0.0, true),
            Err(e) => return Err(e),
        };
        Ok(Self {
            acc: rates.acc,
            sen: rates.sen,
            spe: rates.spe,
            auc,
            confusion: rates.confusion,
            n_test: idx.len(),
            positive_class: positive_class.to_string(),
            degenerate: rates.degenerate || auc_degenerate,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Summary { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub acc: Summary,
    pub sen: Summary,
    pub spe: Summary,
    pub auc: Summary,
    pub runs: Vec<EvalReport>,
}

impl AggregateReport {
    pub fn from_runs(runs: Vec<EvalReport>) -> Self {
        let col = |f: fn(&EvalReport) -> f64| summarize(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            acc: col(|r| r.acc),
            sen: col(|r| r.sen),
            spe: col(|r| r.spe),
            auc: col(|r| r.auc),
            runs,
        }
    }

    /// Percentages, `mean ± std`, one metric per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, s) in [
            ("ACC", self.acc),
            ("SEN", self.sen),
            ("SPE", self.spe),
            ("AUC", self.auc),
        ] {
            let _ = writeln!(out, "{name} {:.2} ± {:.2}", s.mean * 100.0, s.std * 100.0);
        }
        let _ = writeln!(out, "runs {}", self.runs.len());
        out
    }
}

/// Stratified k-fold partition. Returns one set of masks per fold: the fold
/// itself is the test set, and a stratified `val_fraction` of the remaining
/// nodes per class becomes the validation set.
pub fn kfold_split(labels: &[usize], k: usize, val_fraction: f64, seed: u64) -> Result<Vec<Masks>> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!(
            "k-fold needs 2 ≤ k ≤ N, got k={k}, N={n}"
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {val_fraction} outside [0, 1)"
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = stream(seed, Stage::Folds, 0);
    let mut fold_of = vec![0usize; n];
    let mut next = 0;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<bool> = fold_of.iter().map(|&g| g == f).collect();
        let mut val = vec![false; n];
        for members in &by_class {
            let rest: Vec<usize> = members.iter().copied().filter(|&i| !test[i]).collect();
            let take = (rest.len() as f64 * val_fraction).round() as usize;
            for &i in rest.iter().take(take) {
                val[i] = true;
            }
        }
        let train = (0..n).map(|i| !test[i] && !val[i]).collect();
        out.push(Masks { train, val, test });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_auc(scores: &[f64], truth: &[usize], positive: usize) -> f64 {
        let mut hits = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if truth[i] == positive && truth[j] != positive {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        hits += 1.0;
                    } else if scores[i] == scores[j] {
                        hits += 0.5;
                    }
                }
            }
        }
        hits / pairs
    }

    #[test]
    fn rates_trivial_cases() {
        let r = confusion_and_rates(&[1, 0, 1, 0], &[1, 0, 1, 0], 1).unwrap();
        assert_eq!((r.acc, r.sen, r.spe, r.degenerate), (1.0, 1.0, 1.0, false));
        let r = confusion_and_rates(&[0, 0, 0, 0], &[1, 1, 0, 0], 1).unwrap();
        assert_eq!((r.acc, r.sen, r.spe), (0.5, 0.0, 1.0));
        assert!(confusion_and_rates(&[2], &[0], 1).is_err());
        assert!(confusion_and_rates(&[], &[], 1).is_err());
    }

    #[test]
    fn rates_ten_sample_hand_count() {
        let truth = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let pred = [1, 1, 0, 1, 0, 1, 0, 0, 1, 0];
        // TP 3, FN 1, FP 2, TN 4
        let r = confusion_and_rates(&pred, &truth, 1).unwrap();
        assert_eq!(
            r.confusion,
            Confusion {
                tp: 3,
                fn_: 1,
                fp: 2,
                tn: 4
            }
        );
        assert_eq!(r.acc, 0.7);
        assert_eq!(r.sen, 0.75);
        assert_eq!(r.spe, 4.0 / 6.0);
    }

    #[test]
    fn degenerate_rates_flagged() {
        let r = confusion_and_rates(&[0, 0], &[0, 0], 1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.sen, 0.0);
    }

    #[test]
    fn auc_trivial_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 1).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[0, 1, 0, 1], 1).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1], 1).is_err());
    }

    #[test]
    fn auc_matches_pairwise_with_ties() {
        let scores = [0.3, 0.3, 0.7, 0.1, 0.7, 0.5, 0.3];
        let truth = [1, 0, 1, 0, 0, 1, 1];
        assert_eq!(auc(&scores, &truth, 1).unwrap(), brute_auc(&scores, &truth, 1));
        assert_eq!(auc(&scores, &truth, 0).unwrap(), brute_auc(&scores, &truth, 0));
    }

    #[test]
    fn kfold_balanced_hundred() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let folds = kfold_split(&labels, 5, 0.0, 3).unwrap();
        let mut seen = vec![0; 100];
        for m in &folds {
            let idx = Masks::indices(&m.test);
            assert_eq!(idx.len(), 20);
            assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 10);
            assert!(m.is_partition());
            for i in idx {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn kfold_rejects_small_class() {
        let labels = [0, 0, 0, 0, 1, 1];
        assert!(matches!(
            kfold_split(&labels, 3, 0.0, 0),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = summarize(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[4.0]).std, 0.0);
    }

    #[test]
    fn report_json_round_trip() {
        let probs = Matrix::from_rows(&[[0.8, 0.2], [0.3, 0.7], [0.6, 0.4], [0.1, 0.9]]).unwrap();
        let r = EvalReport::from_probs(&probs, &[0, 1, 1, 1], &[true, true, true, false], 1, "AD").unwrap();
        assert_eq!(r.n_test, 3);
        assert_eq!(r.confusion.total(), 3);
        assert_eq!(r.acc, r.confusion.accuracy());
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
