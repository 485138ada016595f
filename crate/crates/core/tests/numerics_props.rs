mod common;

use lporl::numerics::{clamp_interval, project_ball, psd_power, softmax_rows, BallDomain, EIG_FLOOR};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn thousand_randomized_cases() {
    common::numerics_suite(1000, 5).unwrap();
}

#[test]
fn worked_examples() {
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
    let h = psd_power(&m, 0.5, EIG_FLOOR).unwrap();
    assert!((h[(0, 0)] - 2.0).abs() < 1e-14 && (h[(1, 1)] - 3.0).abs() < 1e-14);
    let p = project_ball(&DVector::from_vec(vec![3.0, 4.0]), &BallDomain::new(1.0).unwrap());
    assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    assert_eq!(clamp_interval(-2.0, 0.0, 1.0), 0.0);
    assert_eq!(clamp_interval(7.0, 0.0, 1.0), 1.0);
    let pi = softmax_rows(&DMatrix::from_row_slice(1, 2, &[2f64.ln(), 0.0])).unwrap();
    assert!((pi.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
}

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0..10.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_idempotent_and_bounded(v in vec_strategy(4), radius in 0.01..5.0f64) {
        let dom = BallDomain::new(radius).unwrap();
        let p = project_ball(&DVector::from_vec(v), &dom);
        prop_assert!(p.norm() <= radius);
        prop_assert_eq!(project_ball(&p, &dom), p);
    }

    #[test]
    fn projection_is_nonexpansive(u in vec_strategy(3), v in vec_strategy(3), radius in 0.01..5.0f64) {
        let dom = BallDomain::new(radius).unwrap();
        let (u, v) = (DVector::from_vec(u), DVector::from_vec(v));
        let gap = (project_ball(&u, &dom) - project_ball(&v, &dom)).norm();
        prop_assert!(gap <= (u - v).norm() + 1e-12);
    }

    #[test]
    fn softmax_rows_normalize_and_ignore_shifts(row in vec_strategy(5), shift in -100.0..100.0f64) {
        let logits = DMatrix::from_row_slice(1, 5, &row);
        let p = softmax_rows(&logits).unwrap();
        let q = softmax_rows(&logits.add_scalar(shift)).unwrap();
        let sum: f64 = (0..5).map(|a| p.prob(0, a)).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        for a in 0..5 {
            prop_assert!((p.prob(0, a) - q.prob(0, a)).abs() <= 1e-12);
        }
    }

    #[test]
    fn psd_powers_compose(seed in any::<u64>(), d in 1usize..6) {
        let mut r = common::rng(seed);
        let m = common::well_conditioned_spd(d, &mut r);
        for (a, b) in [(0.5, 0.5), (-0.5, 1.0), (-1.0, 1.0), (0.5, -1.0)] {
            let lhs = psd_power(&m, a, EIG_FLOOR).unwrap() * psd_power(&m, b, EIG_FLOOR).unwrap();
            let rhs = psd_power(&m, a + b, EIG_FLOOR).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-7);
        }
    }
}
