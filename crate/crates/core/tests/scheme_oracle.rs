//! Single steps of every scheme against dense block solves of the scheme
//! equations.

mod common;

use biot_core::schemes::{step_additive, step_coupled_theta, SchemeKind};
use common::scheme::*;

const TOL: f64 = 1e-10;

fn assert_all(checks: Vec<(String, f64)>) {
    assert!(!checks.is_empty());
    for (name, err) in checks {
        assert!(err < TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn coupled_theta_matches_block_solve() {
    assert_all(coupled_checks());
}

#[test]
fn additive_splittings_match_three_level_block_solve() {
    assert_all(additive_checks());
}

#[test]
fn undrained_split_matches_regularized_solve() {
    assert_all(undrained_checks());
}

#[test]
fn fixed_stress_split_matches_stabilized_solve() {
    assert_all(fixed_stress_checks());
}

#[test]
fn three_level_schemes_bootstrap_with_a_coupled_step() {
    assert_all(bootstrap_checks());
}

#[test]
fn step_functions_reject_other_schemes() {
    let f = column_fixture(3);
    let cfg = config(SchemeKind::FixedStressRU, 0.1);
    assert!(step_additive(&f.state, &f.problem, &f.forms, &cfg).is_err());
    assert!(step_coupled_theta(&f.state, &f.problem, &f.forms, &cfg).is_err());
}
