mod common;

use common::*;
use fairsel::eval::{acc, balance, nmi, proportion};

#[test]
fn matches_brute_force_on_every_small_partition() {
    let sweep = metric_oracle_sweep();
    assert!(sweep.pairs > 400_000);
    assert!(sweep.max_acc_err <= 1e-10, "{sweep:?}");
    assert!(sweep.max_nmi_err <= 1e-10, "{sweep:?}");
    assert_eq!(sweep.fairness_mismatches, 0);
}

#[test]
fn oracle_self_checks() {
    assert_eq!(surjective_labelings(3, 2).len(), 6);
    assert_eq!(brute_acc(&[1, 1, 0, 0], &[0, 0, 1, 1]), 1.0);
    assert!((brute_nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
    assert_eq!(brute_balance(&[0, 0, 1, 1], &[0, 1, 0, 1]), 0.5);
    assert_eq!(brute_proportion(&[0, 0, 1, 1], &[0, 1, 0, 1]), 1.0);
}

#[test]
fn hand_worked_cases() {
    let pred = [0, 0, 0, 1, 1, 1];
    let truth = [0, 0, 1, 1, 1, 1];
    assert!((acc(&pred, &truth).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(nmi(&pred, &[0; 6]).unwrap(), 0.0);

    let groups = [0, 0, 1, 0, 1, 1];
    assert!((balance(&pred, &groups).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((proportion(&pred, &groups).unwrap() - 4.0 / 3.0).abs() < 1e-12);

    // perfectly mixed clusters
    let mixed = [0, 1, 0, 1, 0, 1];
    assert_eq!(balance(&pred, &mixed).unwrap(), 1.0 / 3.0);
    assert_eq!(balance(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.5);
    assert_eq!(proportion(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 1.0);
}
