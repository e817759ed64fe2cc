#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::{op_errors, TOL};

#[test]
fn every_op_matches_central_differences() {
    let errors = op_errors();
    assert!(errors.len() >= 30);
    for (name, err) in errors {
        assert!(err <= TOL, "{name}: relative gradient error {err:.3e} exceeds {TOL:e}");
    }
}
