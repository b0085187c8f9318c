mod common;

use common::*;

#[test]
fn tiny_instances_match_dense_root_finder() {
    for row in tiny_oracle_comparison(25) {
        println!(
            "{}: {} compared, {} diverged, max |diff| {:e}",
            row.kind, row.compared, row.diverged, row.worst
        );
        assert_eq!(row.compared, 25, "{}: too few datasets", row.kind);
        assert!(
            row.worst <= 1e-6,
            "{}: max |diff| {:e}",
            row.kind,
            row.worst
        );
    }
}

#[test]
fn reference_score_vanishes_at_library_root() {
    use gee2::estimators::{fit_complete_case, ScoringControls};
    let data = tiny_dataset(7, 6, 5, true);
    let fit = fit_complete_case(&data, &ScoringControls::default()).unwrap();
    let g = reference_score(&data, &Reference::CompleteCase, &fit.theta.stacked());
    assert!(g.norm() < 1e-7, "{g}");
}
