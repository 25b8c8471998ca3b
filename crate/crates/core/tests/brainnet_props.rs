mod common;

use common::subject;
use popgnn::brainnet::*;
use popgnn::matrix::Matrix;
use popgnn::subject::{Diagnosis, Gender, RoiFeatureTable, Split, SubjectRecord};
use popgnn::Error;
use proptest::prelude::*;

/// A reference built from `rows` NC train subjects of width `p`.
fn reference(rows: &[Vec<f64>]) -> NcReference {
    let p = rows[0].len();
    let ids: Vec<String> = (0..rows.len()).map(|i| format!("n{i}")).collect();
    let subjects: Vec<SubjectRecord> = ids
        .iter()
        .map(|id| SubjectRecord {
            split: Some(Split::Train),
            ..subject(id, Diagnosis::Nc, Gender::F, 70.0, 0, 29)
        })
        .collect();
    let data = rows.concat();
    let table = RoiFeatureTable::new(ids, Matrix::new(rows.len(), p, data).unwrap()).unwrap();
    build_nc_reference(&table, &subjects).unwrap()
}

fn cohort(p: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(0.5..1.5f64, p), 4..12),
        prop::collection::vec(0.3..1.7f64, p),
    )
}

proptest! {
    #[test]
    fn effect_sizes_symmetric_with_zero_diagonal((rows, f) in (2usize..9).prop_flat_map(cohort)) {
        let r = reference(&rows);
        let e = effect_size_matrix(&f, &r, DEFAULT_EPS).unwrap();
        prop_assert!(e.is_symmetric());
        prop_assert!(e.diag().iter().all(|&d| d == 0.0));
        for &v in e.data() {
            prop_assert!((fisher_r(v) - v.tanh()).abs() < 1e-12);
            prop_assert!((fisher_weight(v) - (1.0 - v.tanh())).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_strictly_decreasing(e in 0.0..30.0f64, step in 1e-6..5.0f64) {
        prop_assert!(fisher_weight(e + step) < fisher_weight(e));
    }

    #[test]
    fn brain_network_bounded_by_reference_correlation((rows, f) in (2usize..9).prop_flat_map(cohort)) {
        let r = reference(&rows);
        let bn = build_brain_network("x", &f, &r, DEFAULT_EPS).unwrap();
        for (b, c) in bn.b.data().iter().zip(r.corr.data()) {
            prop_assert!(b.abs() <= c.abs());
        }
        let flat = flatten_upper(&bn);
        prop_assert_eq!(unflatten_upper(&flat.values, f.len()).unwrap(), bn.b);
    }
}

#[test]
fn flatten_length_for_all_sizes() {
    for p in 1..200 {
        let bn = BrainNetwork {
            subject_id: "x".into(),
            b: Matrix::identity(p),
        };
        assert_eq!(flatten_upper(&bn).values.len(), p * (p + 1) / 2, "P = {p}");
    }
}

#[test]
fn reference_rejects_planted_test_split_nc() {
    let mut subjects: Vec<SubjectRecord> = (0..4)
        .map(|i| SubjectRecord {
            split: Some(Split::Train),
            ..subject(&format!("n{i}"), Diagnosis::Nc, Gender::M, 70.0, 0, 29)
        })
        .collect();
    subjects[3].split = Some(Split::Test);
    let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
    let table = RoiFeatureTable::new(
        ids.clone(),
        Matrix::from_fn(4, 3, |i, j| 1.0 + 0.1 * ((i * 3 + j) % 5) as f64),
    )
    .unwrap();
    match build_nc_reference_from(&table, &subjects, &ids) {
        Err(Error::ReferenceLeak { id }) => assert_eq!(id, "n3"),
        other => panic!("expected a leak error, got {other:?}"),
    }
    // The filtering builder leaves the planted subject out.
    let r = build_nc_reference(&table, &subjects).unwrap();
    assert_eq!(r.source_ids, ["n0", "n1", "n2"]);
}
