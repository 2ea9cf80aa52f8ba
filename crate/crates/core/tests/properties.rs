use corrkd::dsp::{measure_snr, mix_at_snr, synth_noise, AudioBuffer, NoiseKind};
use corrkd::losses::{heuristic_lambda, RepresentationBatch, Standardization};
use corrkd::rng::rng_for;
use corrkd::Tensor;
use proptest::prelude::*;

fn batch_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
    (3usize..=6, 1usize..=3, 2usize..=5).prop_flat_map(|(b, t, d)| {
        let n = b * 3 * t * d;
        (
            Just(vec![b, 3, t, d]),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlations_ignore_positive_scale((shape, s, h) in batch_strategy(), k in 0.1f64..10.0) {
        let base = RepresentationBatch::new(Tensor::new(&shape, s.clone()).unwrap(), Tensor::new(&shape, h.clone()).unwrap()).unwrap();
        let scaled: Vec<f64> = s.iter().map(|x| k * x).collect();
        let other = RepresentationBatch::new(Tensor::new(&shape, scaled).unwrap(), Tensor::new(&shape, h).unwrap()).unwrap();
        let a = base.cross_corr(Standardization::Full).unwrap().values;
        let b = other.cross_corr(Standardization::Full).unwrap().values;
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        let a = base.self_corr(Standardization::Full).unwrap().values;
        let b = other.self_corr(Standardization::Full).unwrap().values;
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn self_correlation_is_symmetric_with_unit_diagonal((shape, s, h) in batch_strategy()) {
        let d = shape[3];
        let batch = RepresentationBatch::new(Tensor::new(&shape, s).unwrap(), Tensor::new(&shape, h).unwrap()).unwrap();
        let c = batch.self_corr(Standardization::Full).unwrap().values;
        for m in c.data().chunks(d * d) {
            for i in 0..d {
                prop_assert!((m[i * d + i] - 1.0).abs() < 1e-6);
                for j in 0..d {
                    prop_assert!((m[i * d + j] - m[j * d + i]).abs() < 1e-12);
                    prop_assert!(m[i * d + j].abs() <= 1.0 + 1e-6);
                }
            }
        }
    }

    #[test]
    fn heuristic_is_bounded_and_decreasing(a in 10.0f64..=20.0, b in 10.0f64..=20.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(heuristic_lambda(hi) <= heuristic_lambda(lo));
        if lo < hi {
            prop_assert!(heuristic_lambda(hi) < heuristic_lambda(lo));
        }
        for s in [a, b] {
            prop_assert!((5e-7..=5e-5).contains(&heuristic_lambda(s)));
        }
    }

    #[test]
    fn mixing_hits_the_target_snr(target in 10.0f64..20.0, len in 200usize..2000, seed in any::<u64>(), kind in 0usize..4) {
        let kinds = [NoiseKind::Gaussian, NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble];
        let signal: Vec<f64> = (0..len).map(|i| 0.2 * (i as f64 * 0.05).sin()).collect();
        let signal = AudioBuffer::new(signal, 16_000).unwrap();
        let noise = synth_noise(kinds[kind], len + 100, 16_000, seed).unwrap();
        let m = mix_at_snr(&signal, &noise, target, &mut rng_for(seed, &[])).unwrap();
        prop_assert!((measure_snr(&signal, &m.scaled_noise).unwrap() - target).abs() < 1e-9);
        prop_assert!(m.mixed.samples().iter().all(|x| x.abs() <= 1.0));
    }
}
