use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semg_fin::dataset::{assign_split, slide_windows, zscore_channels, Recording, Split, NUM_CHANNELS, WINDOW_LEN};
use semg_fin::features::{entropy, rms, ssi, FeatureMatrix, ENTROPY_BINS};
use semg_fin::fin::FinModel;
use semg_fin::features::FeatureKind;
use semg_fin::nn::{adam_update, softmax_cross_entropy, AdamConfig, Param, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_repetition_lands_in_exactly_one_split(subject in 1u32..=40, rep in 1u8..=6) {
        let s = assign_split(subject, rep).unwrap();
        let is_test = rep == 2 || rep == 5;
        prop_assert_eq!(s == Split::Test, is_test);
        if subject > 25 {
            prop_assert!(s != Split::Pretrain);
        }
        prop_assert_eq!(assign_split(subject, rep).unwrap(), s);
    }

    #[test]
    fn ssi_is_window_length_times_squared_rms(xs in prop::collection::vec(-5.0f64..5.0, WINDOW_LEN)) {
        let r = rms(&xs);
        let lhs = ssi(&xs);
        prop_assert!((lhs - 600.0 * r * r).abs() <= 1e-9 * lhs.max(1.0));
    }

    #[test]
    fn entropy_ignores_positive_affine_maps(
        ks in prop::collection::vec(-64i32..64, 50..200),
        scale_pow in -3i32..4,
        shift in -32i32..32,
    ) {
        // Dyadic data and power-of-two scales keep every bin edge exact.
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64 / 8.0).collect();
        let a = 2f64.powi(scale_pow);
        let ys: Vec<f64> = xs.iter().map(|x| a * x + shift as f64 / 4.0).collect();
        prop_assert_eq!(entropy(&xs, ENTROPY_BINS), entropy(&ys, ENTROPY_BINS));
    }

    #[test]
    fn cross_entropy_ignores_logit_shifts(seed in any::<u64>(), c in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::from_vec(&[3, 17], (0..51).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
        let targets: Vec<usize> = (0..3).map(|_| rng.random_range(0..17)).collect();
        let (l1, g1) = softmax_cross_entropy(&logits, &targets).unwrap();
        let (l2, g2) = softmax_cross_entropy(&logits.map(|v| v + c), &targets).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-10);
        for (a, b) in g1.data().iter().zip(g2.data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_decay_alone_shrinks_parameters(vals in prop::collection::vec(0.01f64..10.0, 1..20), neg in any::<bool>()) {
        let sign = if neg { -1.0 } else { 1.0 };
        let v: Vec<f64> = vals.iter().map(|x| sign * x).collect();
        let mut p = Param::new(Tensor::from_vec(&[v.len()], v.clone()).unwrap());
        let cfg = AdamConfig { lr: 1e-3, weight_decay: 1e-2, ..AdamConfig::default() };
        for _ in 0..5 {
            p.zero_grad();
            adam_update(&mut p, &cfg);
        }
        for (new, old) in p.value.data().iter().zip(&v) {
            prop_assert!(new.abs() < old.abs());
            prop_assert!(new.signum() == old.signum());
        }
    }

    #[test]
    fn features_follow_channel_permutations(seed in any::<u64>(), perm in Just((0..NUM_CHANNELS).collect::<Vec<_>>()).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans: Vec<Vec<f64>> = (0..NUM_CHANNELS)
            .map(|_| (0..WINDOW_LEN).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = chans.iter().map(Vec::as_slice).collect();
        let permuted: Vec<&[f64]> = perm.iter().map(|&p| refs[p]).collect();
        let a = FeatureMatrix::from_channels(&refs);
        let b = FeatureMatrix::from_channels(&permuted);
        for f in 0..4 {
            for (c, &p) in perm.iter().enumerate() {
                prop_assert_eq!(b.values[f][c].to_bits(), a.values[f][p].to_bits());
            }
        }
    }

    #[test]
    fn zscore_commutes_with_windowing(seed in any::<u64>(), pick in 0usize..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2000;
        let channels: Vec<Vec<f64>> = (0..NUM_CHANNELS)
            .map(|c| (0..n).map(|_| rng.random_range(-1.0..1.0) * (c + 1) as f64 + c as f64).collect())
            .collect();
        let raw = Recording::new(1, channels, vec![3; n], vec![1; n]).unwrap();
        let (norm, stats) = zscore_channels(&raw, None).unwrap();
        let ws_raw = slide_windows(raw).unwrap();
        let ws_norm = slide_windows(norm).unwrap();
        prop_assert_eq!(ws_raw.len(), ws_norm.len());
        let w = ws_raw.windows()[pick % ws_raw.len()];
        for c in 0..NUM_CHANNELS {
            let a = ws_raw.channel(&w, c);
            let b = ws_norm.channel(&w, c);
            for (x, y) in a.iter().zip(b) {
                prop_assert!(((x - stats.mean[c]) / stats.std[c] - y).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn predictions_do_not_depend_on_batching(seed in any::<u64>(), batch in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = FinModel::<f64>::with_arch(FeatureKind::Rms, WINDOW_LEN, 4, 2, &mut rng);
        let seqs: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..WINDOW_LEN).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = seqs.iter().map(Vec::as_slice).collect();
        let all = m.predict(&refs, 7).unwrap();
        let chunked = m.predict(&refs, batch).unwrap();
        for (a, b) in all.iter().zip(&chunked) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}
