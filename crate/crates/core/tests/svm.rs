//! Linear SVM against an exact small-instance QP oracle, plus its
//! invariances.

mod common;

use common::{dot, primal, qp_reference, set};
use ecgauth::beatmath::FeatureVector;
use ecgauth::svm::{predict, train, train_with_stats, ClassWeights, Scaler, SvmConfig, SvmModel};
use proptest::prelude::*;

fn check_against_oracle(rows: &[(Vec<f64>, bool)], c: f64) {
    let ts = set(rows);
    let cfg = SvmConfig {
        c,
        ..SvmConfig::default()
    };
    let (model, stats) = train_with_stats(&ts, &cfg).unwrap();
    assert!(stats.converged);
    let (x, y, ub, oracle) = qp_reference(rows, c);
    let mine = primal(&x, &y, &ub, &model.w, model.b);
    assert!(
        (mine - oracle).abs() <= 1e-4,
        "primal {mine} vs oracle {oracle}"
    );
    assert!((model.primal_objective(&ts) - oracle).abs() <= 1e-4);
}

#[test]
fn four_point_separable_matches_qp_oracle() {
    let rows = vec![
        (vec![2.0, 1.5], true),
        (vec![3.0, 3.5], true),
        (vec![-1.0, 0.2], false),
        (vec![0.5, -2.0], false),
    ];
    check_against_oracle(&rows, 1.0);
    check_against_oracle(&rows, 100.0);
}

#[test]
fn four_point_soft_and_unbalanced_match_qp_oracle() {
    let rows = vec![
        (vec![0.4, 1.0], true),
        (vec![1.1, 0.3], true),
        (vec![1.5, 1.9], true),
        (vec![0.9, 0.8], false),
    ];
    check_against_oracle(&rows, 0.05);
    check_against_oracle(&rows, 1.0);
    let overlap = vec![
        (vec![0.0, 1.0], true),
        (vec![1.0, 0.2], false),
        (vec![0.8, 0.9], true),
        (vec![0.3, 0.1], false),
    ];
    check_against_oracle(&overlap, 0.3);
    check_against_oracle(&overlap, 10.0);
}

#[test]
fn symmetric_one_dimensional_case() {
    let ts = set(&[(vec![-1.0], false), (vec![1.0], true)]);
    let m = train(&ts, &SvmConfig::default()).unwrap();
    assert!(predict(&m, &FeatureVector(vec![0.5])).unwrap().0);
    assert!(!predict(&m, &FeatureVector(vec![-0.5])).unwrap().0);
}

#[test]
fn hard_margin_boundary_sits_mid_gap() {
    // the positive and the nearest negative both land exactly on the margin
    let neg = [
        -3.714830496935587,
        -2.7416515194401474,
        -2.8883123688234353,
        -3.976766753759746,
        -1.0361002692985593,
        -1.5685096659843218,
    ];
    let pos = 3.9044473843602305;
    let mut rows = vec![(vec![pos], true)];
    rows.extend(neg.iter().map(|&v| (vec![v], false)));
    let m = train(&set(&rows), &SvmConfig::default()).unwrap();
    let boundary = m.scaler.mean[0] - m.b * m.scaler.std[0] / m.w[0];
    assert!((boundary - 0.5 * (pos + neg[4])).abs() < 1e-6, "{boundary}");
}

#[test]
fn zero_margin_rejects() {
    let m = SvmModel {
        w: vec![1.0, -1.0],
        b: 0.5,
        scaler: Scaler::identity(2),
        c: 1.0,
        class_weights: ClassWeights {
            positive: 1.0,
            negative: 1.0,
        },
    };
    let (z, margin) = predict(&m, &FeatureVector(vec![1.0, 1.5])).unwrap();
    assert_eq!(margin, 0.0);
    assert!(!z);
    assert!(predict(&m, &FeatureVector(vec![1.0])).is_err());
}

#[test]
fn single_class_is_refused() {
    let ts = set(&[(vec![1.0], true), (vec![2.0], true)]);
    assert!(train(&ts, &SvmConfig::default()).is_err());
}

#[test]
fn training_is_reproducible() {
    let rows: Vec<(Vec<f64>, bool)> = (0..40)
        .map(|i| {
            let t = i as f64;
            (
                vec![
                    (t * 0.7).sin() + if i % 3 == 0 { 1.5 } else { 0.0 },
                    (t * 1.3).cos(),
                ],
                i % 3 == 0,
            )
        })
        .collect();
    let a = train(&set(&rows), &SvmConfig::default()).unwrap();
    let b = train(&set(&rows), &SvmConfig::default()).unwrap();
    assert_eq!(a, b);
}

fn separable_rows(dim: usize) -> impl Strategy<Value = Vec<(Vec<f64>, bool)>> {
    (
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 4..14),
        prop::collection::vec(-1.0f64..1.0, dim),
    )
        .prop_map(|(pts, dir)| {
            let norm = dot(&dir, &dir).sqrt().max(1e-3);
            pts.into_iter()
                .enumerate()
                .map(|(i, mut p)| {
                    let y = i % 2 == 0;
                    // push each class 1.5 units off the hyperplane along dir
                    let s = dot(&p, &dir) / norm;
                    let shift = if y {
                        1.5 - s.min(0.0)
                    } else {
                        -1.5 - s.max(0.0)
                    };
                    for (v, d) in p.iter_mut().zip(&dir) {
                        *v += shift * d / norm;
                    }
                    (p, y)
                })
                .collect()
        })
}

fn margins(m: &SvmModel, probes: &[Vec<f64>]) -> Vec<f64> {
    probes.iter().map(|p| m.margin(p).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn feature_permutation_leaves_predictions(
        rows in separable_rows(3),
        probes in prop::collection::vec(prop::collection::vec(-6.0f64..6.0, 3), 10),
        c in 0.1f64..10.0,
    ) {
        let perm = [2usize, 0, 1];
        let shuffled: Vec<(Vec<f64>, bool)> = rows
            .iter()
            .map(|(x, y)| (perm.iter().map(|&k| x[k]).collect(), *y))
            .collect();
        // a tight gap so both solutions sit on the same optimum
        let cfg = SvmConfig { c, gap_tol: 1e-12, ..SvmConfig::default() };
        let a = train(&set(&rows), &cfg).unwrap();
        let b = train(&set(&shuffled), &cfg).unwrap();
        let pp: Vec<Vec<f64>> = probes.iter().map(|x| perm.iter().map(|&k| x[k]).collect()).collect();
        for (ma, mb) in margins(&a, &probes).iter().zip(margins(&b, &pp)) {
            prop_assert!((ma - mb).abs() <= 1e-4 * (1.0 + ma.abs()), "{} vs {}", ma, mb);
        }
    }

    #[test]
    fn duplicating_every_row_keeps_boundary(
        rows in separable_rows(2),
        probes in prop::collection::vec(prop::collection::vec(-6.0f64..6.0, 2), 10),
    ) {
        // large C reaches the hard-margin solution, which duplication
        // cannot move; fixed class weights keep the costs equal
        let cfg = SvmConfig {
            c: 1e4,
            class_weights: Some(ClassWeights { positive: 1.0, negative: 1.0 }),
            gap_tol: 1e-12,
            ..SvmConfig::default()
        };
        let doubled: Vec<(Vec<f64>, bool)> = rows.iter().chain(rows.iter()).cloned().collect();
        let a = train(&set(&rows), &cfg).unwrap();
        let b = train(&set(&doubled), &cfg).unwrap();
        for (ma, mb) in margins(&a, &probes).iter().zip(margins(&b, &probes)) {
            prop_assert!((ma - mb).abs() <= 1e-3 * (1.0 + ma.abs()), "{} vs {}", ma, mb);
        }
    }

    #[test]
    fn duplicating_minority_keeps_predictions_in_one_dimension(
        pos in prop::collection::vec(1.0f64..4.0, 1..4),
        neg in prop::collection::vec(-4.0f64..-1.0, 4..10),
        k in 2usize..5,
        probes in prop::collection::vec(-5.0f64..5.0, 12),
    ) {
        let rows: Vec<(Vec<f64>, bool)> = pos
            .iter()
            .map(|&v| (vec![v], true))
            .chain(neg.iter().map(|&v| (vec![v], false)))
            .collect();
        let mut dup = rows.clone();
        for _ in 1..k {
            dup.extend(pos.iter().map(|&v| (vec![v], true)));
        }
        let cfg = SvmConfig { c: 1e4, gap_tol: 1e-12, ..SvmConfig::default() };
        let a = train(&set(&rows), &cfg).unwrap();
        let b = train(&set(&dup), &cfg).unwrap();
        for p in probes {
            let (za, ma) = predict(&a, &FeatureVector(vec![p])).unwrap();
            let (zb, _) = predict(&b, &FeatureVector(vec![p])).unwrap();
            if ma.abs() > 1e-3 {
                prop_assert_eq!(za, zb);
            }
        }
    }

    #[test]
    fn margin_is_affine_in_the_input(
        rows in separable_rows(3),
        d1 in prop::collection::vec(-6.0f64..6.0, 3),
        d2 in prop::collection::vec(-6.0f64..6.0, 3),
        t in -2.0f64..3.0,
    ) {
        let m = train(&set(&rows), &SvmConfig::default()).unwrap();
        let mix: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let want = t * m.margin(&d1).unwrap() + (1.0 - t) * m.margin(&d2).unwrap();
        prop_assert!((m.margin(&mix).unwrap() - want).abs() <= 1e-9 * (1.0 + want.abs()));
        for k in 0..3 {
            let mut e = d1.clone();
            e[k] += 0.5;
            let slope = (m.margin(&e).unwrap() - m.margin(&d1).unwrap()) / 0.5;
            prop_assert!((slope - m.w[k] / m.scaler.std[k]).abs() <= 1e-8 * (1.0 + slope.abs()));
        }
    }
}
