mod common;

use common::separated_families;

#[test]
fn separated_families_are_clustered_and_classified_exactly() {
    let s = separated_families();
    let first = s.train_labels[0];
    for (i, &l) in s.train_labels.iter().enumerate() {
        assert_eq!(l == first, i % 2 == 0, "sample {i} left its family");
    }
    for (i, &l) in s.truth.iter().enumerate() {
        assert_eq!(l == first, i % 2 == 0, "test sample {i} closest to the other family");
    }
    assert_eq!(s.truth, s.predicted);
    assert_eq!(s.error_rate, 0.0);
}
