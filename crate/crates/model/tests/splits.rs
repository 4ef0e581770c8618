//! Cross-validation split invariants.

use std::collections::HashSet;
use trabs_model::splits::make_cv_splits;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("case_{i:03}")).collect()
}

#[test]
fn ten_ids_five_folds() {
    let folds = make_cv_splits(&ids(10), 5, 1).unwrap();
    assert_eq!(folds.len(), 5);
    let mut all_test = HashSet::new();
    for f in &folds {
        assert_eq!(f.test_ids.len(), 2);
        for id in &f.test_ids {
            assert!(all_test.insert(id.clone()), "test id repeated across folds");
        }
    }
    assert_eq!(all_test.len(), 10);
}

#[test]
fn two_hundred_ids_matches_expected_sizes() {
    let folds = make_cv_splits(&ids(200), 5, 7).unwrap();
    for f in &folds {
        assert_eq!(f.test_ids.len(), 40);
        assert_eq!(f.train_ids.len(), 128);
        assert_eq!(f.val_ids.len(), 32);
    }
}

#[test]
fn deterministic_and_disjoint() {
    let a = make_cv_splits(&ids(23), 5, 9).unwrap();
    let b = make_cv_splits(&ids(23), 5, 9).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.train_ids, y.train_ids);
        assert_eq!(x.val_ids, y.val_ids);
        assert_eq!(x.test_ids, y.test_ids);
    }
    let c = make_cv_splits(&ids(23), 5, 10).unwrap();
    assert_ne!(a[0].test_ids, c[0].test_ids);

    for f in &a {
        let train: HashSet<_> = f.train_ids.iter().collect();
        let val: HashSet<_> = f.val_ids.iter().collect();
        let test: HashSet<_> = f.test_ids.iter().collect();
        assert!(train.is_disjoint(&val));
        assert!(train.is_disjoint(&test));
        assert!(val.is_disjoint(&test));
        assert_eq!(train.len() + val.len() + test.len(), 23);
    }
}

#[test]
fn too_few_cases_rejected() {
    assert!(make_cv_splits(&ids(4), 5, 0).is_err());
    assert!(make_cv_splits(&ids(5), 5, 0).is_ok());
}
