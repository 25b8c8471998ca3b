use popgnn::matrix::Matrix;
use popgnn::metrics::{auc, confusion_and_rates, kfold_split, summarize, EvalReport};
use popgnn::popgraph::Masks;
use popgnn::Error;
use proptest::collection::vec;
use proptest::prelude::*;

/// Fraction of (positive, negative) pairs ranked correctly, ties half.
fn pair_count_auc(scores: &[f64], truth: &[usize]) -> f64 {
    let mut hits = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if truth[i] == 1 && truth[j] == 0 {
                pairs += 1.0;
                hits += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    hits / pairs
}

fn two_class(truth: &[usize]) -> bool {
    truth.contains(&0) && truth.contains(&1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_matches_pair_counting(data in vec((0u8..6, 0usize..2), 2..60)) {
        // Few distinct scores, so ties are common.
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
        let truth: Vec<usize> = data.iter().map(|(_, t)| *t).collect();
        prop_assume!(two_class(&truth));
        let a = auc(&scores, &truth, 1).unwrap();
        prop_assert!((a - pair_count_auc(&scores, &truth)).abs() < 1e-12);
    }

    #[test]
    fn auc_rank_invariance_and_symmetry(data in vec((-5.0f64..5.0, 0usize..2), 2..60)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
        let truth: Vec<usize> = data.iter().map(|(_, t)| *t).collect();
        prop_assume!(two_class(&truth));
        let a = auc(&scores, &truth, 1).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert!((auc(&squashed, &truth, 1).unwrap() - a).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &truth, 1).unwrap() - (1.0 - a)).abs() < 1e-12);
        prop_assert!((auc(&flipped, &truth, 0).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn rates_agree_with_direct_counts(data in vec((0usize..2, 0usize..2), 1..80), positive in 0usize..2) {
        let pred: Vec<usize> = data.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = data.iter().map(|p| p.1).collect();
        let r = confusion_and_rates(&pred, &truth, positive).unwrap();
        let n = pred.len() as f64;
        let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64;
        prop_assert_eq!(r.confusion.total() as usize, pred.len());
        prop_assert!((r.acc - correct / n).abs() < 1e-15);
        let pos = truth.iter().filter(|&&t| t == positive).count();
        let neg = truth.len() - pos;
        prop_assert_eq!(r.degenerate, pos == 0 || neg == 0);
        if pos > 0 {
            let hit = pred.iter().zip(&truth).filter(|(p, t)| **t == positive && **p == positive).count();
            prop_assert!((r.sen - hit as f64 / pos as f64).abs() < 1e-15);
        }
        if neg > 0 {
            let hit = pred.iter().zip(&truth).filter(|(p, t)| **t != positive && **p != positive).count();
            prop_assert!((r.spe - hit as f64 / neg as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn kfold_partitions_and_stratifies(
        k in 2usize..10,
        n_pos in 10usize..40,
        n_neg in 10usize..40,
        seed in any::<u64>(),
        val_fraction in 0.0f64..0.4,
    ) {
        let mut labels = vec![1; n_pos];
        labels.extend(vec![0; n_neg]);
        let folds = kfold_split(&labels, k, val_fraction, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut covered = vec![0; labels.len()];
        for f in &folds {
            prop_assert!(f.is_partition());
            for i in Masks::indices(&f.test) {
                covered[i] += 1;
            }
        }
        prop_assert!(covered.iter().all(|&c| c == 1));
        for class in 0..2 {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| Masks::indices(&f.test).iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} counts {:?}", class, counts);
        }
        prop_assert_eq!(kfold_split(&labels, k, val_fraction, seed).unwrap(), folds);
    }

    #[test]
    fn summary_matches_two_pass_formula(values in vec(-1.0f64..1.0, 2..30)) {
        let s = summarize(&values);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        prop_assert!((s.mean - mean).abs() < 1e-15);
        prop_assert!((s.std - var.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn auc_rejects_single_class_and_bad_scores() {
    assert!(matches!(auc(&[0.1, 0.2], &[1, 1], 1), Err(Error::SingleClass { .. })));
    assert!(matches!(
        auc(&[f64::NAN, 0.2], &[0, 1], 1),
        Err(Error::InvalidArgument(_))
    ));
    assert!(auc(&[0.1], &[0, 1], 1).is_err());
}

#[test]
fn kfold_needs_k_members_per_class() {
    let labels = [0, 0, 0, 0, 1, 1];
    assert!(matches!(
        kfold_split(&labels, 3, 0.1, 0),
        Err(Error::ClassTooSmall {
            class: 1,
            count: 2,
            k: 3
        })
    ));
    assert!(kfold_split(&labels, 1, 0.1, 0).is_err());
}

#[test]
fn report_uses_only_test_nodes() {
    let probs = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7], [0.5, 0.5]]).unwrap();
    let truth = [0, 1, 1, 0, 1];
    let test = [true, true, true, true, false];
    let r = EvalReport::from_probs(&probs, &truth, &test, 1, "AD").unwrap();
    // Predictions 0, 1, 0, 1 against 0, 1, 1, 0.
    assert_eq!(r.n_test, 4);
    assert_eq!(
        (r.confusion.tp, r.confusion.fn_, r.confusion.fp, r.confusion.tn),
        (1, 1, 1, 1)
    );
    assert_eq!(r.acc, 0.5);
    // Positive scores 0.8, 0.4 vs negative 0.1, 0.7: three of four pairs.
    assert_eq!(r.auc, 0.75);
    assert!(!r.degenerate);
    assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
}
