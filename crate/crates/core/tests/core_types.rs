use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use rc_core::io::{read_binary, read_csv, write_binary, write_csv};
use rc_core::linalg::{moment_summary, signed_extreme_budget, top_k_budget, top_k_sum};
use rc_core::{BudgetKind, Error, Label, PointSet};

fn random_symmetric(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    (&g + g.transpose()) * 0.5
}

fn random_unit(rng: &mut impl Rng, d: usize) -> nalgebra::DVector<f64> {
    let v = nalgebra::DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    v.normalize()
}

#[test]
fn two_point_moments() {
    let s = PointSet::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    let m = moment_summary(&s, None).unwrap();
    assert_eq!(m.mean, vec![1.0, 0.0]);
    assert_eq!(m.covariance, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn singleton_has_zero_covariance() {
    let s = PointSet::from_rows(&[vec![3.0, -1.0, 7.5]]).unwrap();
    let m = moment_summary(&s, None).unwrap();
    assert_eq!(m.covariance, DMatrix::zeros(3, 3));
}

#[test]
fn centered_second_moment_matches_double_loop() {
    let mut rng = rc_core::rng::seeded(3);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let s = PointSet::from_rows(&rows).unwrap();
    let m = moment_summary(&s, Some(&[0.0, 0.0, 0.0])).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = 0.0;
            for r in &rows {
                acc += r[a] * r[b];
            }
            assert_abs_diff_eq!(m.centered_second_moment[(a, b)], acc / 5.0, epsilon = 1e-14);
        }
    }
}

#[test]
fn moment_summary_rejects_bad_center() {
    let s = PointSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
    assert!(matches!(moment_summary(&s, Some(&[0.0])), Err(Error::DimensionMismatch(_))));
}

#[test]
fn point_set_rejects_ragged_rows() {
    assert!(PointSet::from_rows(&[vec![0.0, 1.0], vec![2.0]]).is_err());
    assert!(PointSet::from_rows(&[]).is_err());
}

#[test]
fn top_k_of_diagonal() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
    let (value, m) = top_k_budget(&a, 2).unwrap();
    assert_abs_diff_eq!(value, 5.0, epsilon = 1e-12);
    assert_eq!(m.kind, BudgetKind::Projection);
    let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0]));
    assert!((m.matrix - expected).abs().max() < 1e-12);
}

#[test]
fn top_k_of_identity_is_k() {
    for d in 1..6 {
        for k in 1..=d {
            assert_abs_diff_eq!(top_k_sum(&DMatrix::identity(d, d), k).unwrap(), k as f64, epsilon = 1e-12);
        }
    }
}

#[test]
fn top_1_matches_random_direction_search() {
    let mut rng = rc_core::rng::seeded(4);
    let a = random_symmetric(&mut rng, 4);
    let value = top_k_sum(&a, 1).unwrap();
    let best = (0..100_000)
        .map(|_| {
            let v = random_unit(&mut rng, 4);
            (v.transpose() * &a * &v)[(0, 0)]
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best <= value + 1e-12);
    assert!(value - best < 1e-3, "{value} vs {best}");
}

#[test]
fn signed_extreme_examples() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, -7.0]));
    assert_abs_diff_eq!(signed_extreme_budget(&a, 1).unwrap(), 7.0, epsilon = 1e-12);
    assert_eq!(signed_extreme_budget(&DMatrix::zeros(3, 3), 2).unwrap(), 0.0);
}

#[test]
fn signed_extreme_matches_random_projection_search() {
    let mut rng = rc_core::rng::seeded(5);
    let a = random_symmetric(&mut rng, 3);
    let value = signed_extreme_budget(&a, 2).unwrap();
    // A rank-2 projection in R^3 is I - u u^T for a unit u.
    let best = (0..100_000)
        .map(|_| {
            let u = random_unit(&mut rng, 3);
            let v = DMatrix::identity(3, 3) - &u * u.transpose();
            (v.component_mul(&a)).sum().abs()
        })
        .fold(0.0f64, f64::max);
    assert!(best <= value + 1e-12);
    assert!(value - best < 1e-3, "{value} vs {best}");
}

#[test]
fn top_k_rejects_bad_input() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    assert!(matches!(top_k_budget(&a, 1), Err(Error::NotSymmetric(_))));
    assert!(matches!(top_k_budget(&DMatrix::identity(2, 2), 3), Err(Error::InvalidRank { .. })));
}

#[test]
fn binary_round_trip() {
    let s = PointSet::from_rows(&[vec![1.5, -2.0], vec![0.0, 1e-300], vec![f64::MAX, 3.0]]).unwrap();
    let mut buf = Vec::new();
    write_binary(&s, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"RCPS");
    assert_eq!(buf.len(), 12 + 6 * 8);
    assert_eq!(read_binary(&buf[..]).unwrap(), s);
}

#[test]
fn binary_rejects_bad_magic_and_truncation() {
    let s = PointSet::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let mut buf = Vec::new();
    write_binary(&s, &mut buf).unwrap();
    assert!(read_binary(&buf[..buf.len() - 1]).is_err());
    buf[0] = b'X';
    assert!(read_binary(&buf[..]).is_err());
}

#[test]
fn csv_round_trip_with_labels() {
    let s = PointSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
        .unwrap()
        .with_labels(vec![Label::Inlier, Label::Local, Label::Outlier])
        .unwrap();
    let mut buf = Vec::new();
    write_csv(&s, &mut buf).unwrap();
    assert_eq!(read_csv(&buf[..]).unwrap(), s);
}

#[test]
fn csv_reports_offending_line() {
    let text = "1,2\n3,4\n5,x\n";
    match read_csv(text.as_bytes()) {
        Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    match read_csv("1,2\n3\n".as_bytes()) {
        Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

fn symmetric_strategy() -> impl Strategy<Value = (DMatrix<f64>, usize)> {
    (1usize..6, any::<u64>()).prop_map(|(d, seed)| {
        let mut rng = rc_core::rng::seeded(seed);
        (random_symmetric(&mut rng, d), d)
    })
}

proptest! {
    #[test]
    fn top_k_monotone_and_trace_at_d((a, d) in symmetric_strategy()) {
        let values: Vec<f64> = (1..=d).map(|k| top_k_sum(&a, k).unwrap()).collect();
        // Adding an eigenvalue can lower the sum; monotonicity holds for PSD input.
        let psd = &a * &a;
        let psd_values: Vec<f64> = (1..=d).map(|k| top_k_sum(&psd, k).unwrap()).collect();
        prop_assert!(psd_values.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        prop_assert!((values[d - 1] - a.trace()).abs() <= 1e-9 * (1.0 + a.abs().max()));
    }

    #[test]
    fn top_k_rotation_invariant((a, d) in symmetric_strategy(), seed in any::<u64>(), k in 1usize..6) {
        let k = k.min(d);
        let mut rng = rc_core::rng::seeded(seed);
        let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let rotated = &q * &a * q.transpose();
        let rotated = (&rotated + rotated.transpose()) * 0.5;
        let (x, y) = (top_k_sum(&a, k).unwrap(), top_k_sum(&rotated, k).unwrap());
        prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
    }

    #[test]
    fn top_k_witness_is_projection((a, d) in symmetric_strategy(), k in 1usize..6) {
        let k = k.min(d);
        let (value, m) = top_k_budget(&a, k).unwrap();
        let p = &m.matrix;
        prop_assert!((p - p.transpose()).abs().max() <= 1e-9);
        prop_assert!((p * p - p).abs().max() <= 1e-9);
        prop_assert!((p.trace() - k as f64).abs() <= 1e-9);
        prop_assert!((p.component_mul(&a).sum() - value).abs() <= 1e-9 * (1.0 + value.abs()));
    }
}
