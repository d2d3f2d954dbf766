mod common;

use common::suites;

#[test]
fn support_values_match_vertex_enumeration() {
    let worst = suites::set_support_discrepancy(200, 11);
    assert!(worst <= 1e-7, "worst support discrepancy {worst:e}");
}

#[test]
fn qp_matches_projected_gradient() {
    let worst = suites::qp_objective_discrepancy(100, 12);
    assert!(worst <= 1e-5, "worst objective gap {worst:e}");
}

#[test]
fn dare_residuals_are_small() {
    let (control, filter) = suites::dare_residuals();
    assert!(control <= 1e-10, "control residual {control:e}");
    assert!(filter <= 1e-10, "filter residual {filter:e}");
}

#[test]
fn normal_quantile_matches_quadrature() {
    let worst = suites::quantile_discrepancy();
    assert!(worst <= 1e-9, "worst quantile error {worst:e}");
}

#[test]
fn oracle_self_check() {
    // Vertex enumeration on the unit square and a known quantile.
    let v = common::vertices(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], &[1.0, 1.0, 1.0, 1.0]);
    assert_eq!(v.len(), 4);
    assert!((common::quantile_oracle(0.975) - 1.959_963_984_540_054).abs() < 1e-10);
}
