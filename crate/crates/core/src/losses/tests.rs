use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn log_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

#[test]
fn kd_of_identical_inputs_is_pure_cosine() {
    let h = random(&[2, 3, 4, 5], 1);
    let batch = RepresentationBatch::new(h.clone(), h).unwrap();
    let gamma = 0.7;
    let want = -gamma * 3.0 * 4.0 * log_sigmoid(1.0);
    assert!((batch.kd_loss(gamma).unwrap() - want).abs() < 1e-12);
}

#[test]
fn kd_l1_hand_case() {
    let h = Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
    let s = Tensor::zeros(&[1, 1, 1, 2]);
    let batch = RepresentationBatch::new(s, h).unwrap();
    assert_eq!(batch.kd_loss(0.0).unwrap(), 1.5);
}

#[test]
fn bt_identical_centered_views_have_zero_diagonal() {
    let mut y = random(&[6, 4], 2);
    for j in 0..4 {
        let m: f64 = (0..6).map(|i| y.get(&[i, j])).sum::<f64>() / 6.0;
        for i in 0..6 {
            y.set(&[i, j], y.get(&[i, j]) - m);
        }
    }
    let tape = Tape::new();
    let a = tape.param(y.clone());
    let b = tape.param(y.clone());
    let with = tape.item(bt_loss(&tape, a, b, 0.3).unwrap()).unwrap();
    let without = tape.item(bt_loss(&tape, a, b, 0.0).unwrap()).unwrap();
    assert!(without.abs() < 1e-12, "diagonal term {without}");
    assert!(with > 0.0);
}

#[test]
fn bt_anticorrelated_columns() {
    let tape = Tape::new();
    let a = tape.param(Tensor::new(&[2, 2], vec![1.0, -2.0, -1.0, 2.0]).unwrap());
    let b = tape.param(Tensor::new(&[2, 2], vec![-1.0, 2.0, 1.0, -2.0]).unwrap());
    let l = tape.item(bt_loss(&tape, a, b, 0.0).unwrap()).unwrap();
    assert!((l - 8.0).abs() < 1e-12, "{l}");
}

#[test]
fn cross_corr_of_equal_inputs_has_unit_diagonal() {
    let h = random(&[8, 3, 5, 16], 3);
    let c = RepresentationBatch::new(h.clone(), h)
        .unwrap()
        .cross_corr(Standardization::Full)
        .unwrap();
    assert_eq!(c.values.shape(), &[3, 5, 16, 16]);
    assert_eq!(c.kind, CorrelationKind::Cross);
    for pt in 0..15 {
        for i in 0..16 {
            let v = c.values.data()[(pt * 16 + i) * 16 + i];
            assert!((v - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn independent_features_are_weakly_correlated() {
    let batch = RepresentationBatch::new(random(&[64, 3, 2, 8], 4), random(&[64, 3, 2, 8], 5)).unwrap();
    let c = batch.cross_corr(Standardization::Full).unwrap();
    let (mut sum, mut n) = (0.0, 0);
    for pt in 0..6 {
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    sum += c.values.data()[(pt * 8 + i) * 8 + j];
                    n += 1;
                }
            }
        }
    }
    assert!((sum / n as f64).abs() < 0.3);
}

#[test]
fn self_corr_is_symmetric_with_unit_diagonal() {
    let s = random(&[5, 3, 2, 6], 6);
    let c = RepresentationBatch::new(s.clone(), s)
        .unwrap()
        .self_corr(Standardization::Full)
        .unwrap();
    let v = c.values.data();
    for pt in 0..6 {
        for i in 0..6 {
            assert!((v[(pt * 6 + i) * 6 + i] - 1.0).abs() < 1e-6);
            for j in 0..6 {
                assert_eq!(v[(pt * 6 + i) * 6 + j], v[(pt * 6 + j) * 6 + i]);
            }
        }
    }
}

#[test]
fn two_sample_batch_is_perfectly_anticorrelated() {
    // rows [1, 2] and [3, 1] at every (p, t)
    let mut s = Tensor::zeros(&[2, 3, 2, 2]);
    for p in 0..3 {
        for t in 0..2 {
            s.set(&[0, p, t, 0], 1.0);
            s.set(&[0, p, t, 1], 2.0);
            s.set(&[1, p, t, 0], 3.0);
            s.set(&[1, p, t, 1], 1.0);
        }
    }
    let c = RepresentationBatch::new(s.clone(), s)
        .unwrap()
        .self_corr(Standardization::Full)
        .unwrap();
    for pt in 0..6 {
        assert!((c.values.data()[pt * 4 + 1] + 1.0).abs() < 1e-9);
    }
}

#[test]
fn correlations_ignore_positive_rescaling() {
    let s = random(&[6, 3, 2, 4], 7);
    let h = random(&[6, 3, 2, 4], 8);
    let a = RepresentationBatch::new(s.clone(), h.clone()).unwrap();
    let b = RepresentationBatch::new(s.map(|v| 3.5 * v), h).unwrap();
    let ca = a.cross_corr(Standardization::Full).unwrap().values;
    let cb = b.cross_corr(Standardization::Full).unwrap().values;
    let sa = a.self_corr(Standardization::Full).unwrap().values;
    let sb = b.self_corr(Standardization::Full).unwrap().values;
    for (x, y) in ca.data().iter().zip(cb.data()).chain(sa.data().iter().zip(sb.data())) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn correlations_need_two_samples() {
    let s = random(&[1, 3, 2, 4], 9);
    let batch = RepresentationBatch::new(s.clone(), s).unwrap();
    assert!(matches!(
        batch.cross_corr(Standardization::Full),
        Err(Error::BatchSize { got: 1, .. })
    ));
    assert!(batch.self_corr(Standardization::Full).is_err());
}

#[test]
fn cl_components_on_identical_inputs() {
    let h = random(&[6, 3, 2, 5], 10);
    let w = EffectiveWeights {
        gamma: 1.0,
        lambda_cc: 5e-5,
        lambda_sc: 5e-6,
        standardization: Standardization::Full,
    };
    let r = RepresentationBatch::new(h.clone(), h).unwrap().cl_loss(w).unwrap();
    assert!(r.l_cc_diag.unwrap() < 1e-10);
    let ratio = r.l_cc_offdiag.unwrap() / r.l_sc.unwrap();
    assert!((ratio - 10.0).abs() < 1e-9);
}

#[test]
fn cl_with_zero_weights_is_the_diagonal_term() {
    let w = EffectiveWeights {
        gamma: 0.0,
        lambda_cc: 0.0,
        lambda_sc: 0.0,
        standardization: Standardization::Full,
    };
    let r = RepresentationBatch::new(random(&[4, 3, 2, 5], 11), random(&[4, 3, 2, 5], 12))
        .unwrap()
        .cl_loss(w)
        .unwrap();
    assert_eq!(r.l_total, r.l_cc_diag.unwrap());
    assert!(r.l_total > 0.0);
}

#[test]
fn teacher_receives_no_gradient() {
    let tape = Tape::new();
    let s = tape.param(random(&[4, 3, 2, 5], 13));
    let h = tape.param(random(&[4, 3, 2, 5], 14));
    let kd = kd_loss(&tape, s, h, 1.0).unwrap();
    let cl = cl_loss(&tape, s, h, LossWeights::default().into()).unwrap().total;
    let bt = bt_reference_loss(&tape, s, h, 5e-3).unwrap();
    let total = tape.add(tape.add(kd, cl).unwrap(), bt).unwrap();
    let g = tape.backward(total).unwrap();
    assert!(g.get(h).is_none());
    assert!(g.get(s).unwrap().max_abs() > 0.0);
}

#[test]
fn bt_reference_matches_per_frame_bt() {
    let (b, p, t, d) = (5, 3, 2, 4);
    let s = random(&[b, p, t, d], 15);
    let h = random(&[b, p, t, d], 16);
    let tape = Tape::new();
    let whole = {
        let sv = tape.constant(s.clone());
        let hv = tape.constant(h.clone());
        tape.item(bt_reference_loss(&tape, sv, hv, 0.2).unwrap()).unwrap()
    };
    let mut acc = 0.0;
    for pi in 0..p {
        for ti in 0..t {
            let slice = |x: &Tensor| {
                let mut out = Tensor::zeros(&[b, d]);
                for bi in 0..b {
                    for i in 0..d {
                        out.set(&[bi, i], x.get(&[bi, pi, ti, i]));
                    }
                }
                tape.constant(out)
            };
            acc += tape.item(bt_loss(&tape, slice(&s), slice(&h), 0.2).unwrap()).unwrap();
        }
    }
    assert!((whole - acc / (p * t) as f64).abs() < 1e-12);
}

#[test]
fn heuristic_endpoints_and_midpoint() {
    assert_eq!(heuristic_lambda(10.0), 5e-5);
    assert_eq!(heuristic_lambda(20.0), 5e-7);
    assert!((heuristic_lambda(15.0) - 9.90099e-7).abs() < 1e-12);
    assert_eq!(heuristic_lambda(5.0), heuristic_lambda(10.0));
    assert_eq!(heuristic_lambda(25.0), heuristic_lambda(20.0));
}

#[test]
fn heuristic_weights_follow_view_snr() {
    let w = LossWeights {
        heuristic: true,
        ..LossWeights::default()
    };
    let e = w.effective(20.0, 10.0);
    assert_eq!(e.lambda_cc, 5e-7);
    assert_eq!(e.lambda_sc, 5e-5);
    let fixed = LossWeights::default().effective(20.0, 10.0);
    assert_eq!((fixed.lambda_cc, fixed.lambda_sc), (5e-5, 5e-6));
}
