use ddot_model::data::*;

#[test]
fn even_indices_cover_both_ends() {
    assert_eq!(even_indices(50, 8), vec![0, 7, 14, 21, 28, 35, 42, 49]);
    assert_eq!(even_indices(5, 0), vec![0, 1, 2, 3, 4]);
    assert_eq!(even_indices(5, 9), vec![0, 1, 2, 3, 4]);
    assert_eq!(even_indices(5, 1), vec![0]);
}
