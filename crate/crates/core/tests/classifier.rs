use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semg_fin::classifier::{
    finetune_joint, joint_predict, predict_labels, train_cnn, CnnArch, CnnModel, CnnTrainConfig, JointConfig, JointSample,
    Labeled,
};
use semg_fin::dataset::{synth_generate, zscore_channels, Split, SynthSpec, WindowSet};
use semg_fin::features::{extract, extract_all, FeatureKind, FeatureStats};
use semg_fin::fin::{FinModel, FinSet};
use semg_fin::nn::Module;

fn small_set(classes: usize) -> WindowSet {
    let spec = SynthSpec {
        burst_ms: 1500,
        rest_ms: 1000,
        ..SynthSpec::new(1, classes, 6, 11)
    };
    let recs = synth_generate(&spec)
        .unwrap()
        .iter()
        .map(|r| zscore_channels(r, None).unwrap().0)
        .collect();
    WindowSet::from_recordings(recs).unwrap()
}

fn labeled(ws: &WindowSet, split: Split, every: usize) -> (Vec<Labeled>, FeatureStats) {
    let stats = FeatureStats::fit(&extract_all(&ws.split(Split::Pretrain))).unwrap();
    let data = ws
        .split(split)
        .thin(every)
        .iter()
        .map(|w| Labeled {
            window: *w,
            label: w.label,
            features: stats.apply(&extract(ws, w)),
        })
        .collect();
    (data, stats)
}

fn small_arch() -> CnnArch {
    CnnArch {
        widths: [6, 6, 6],
        ..CnnArch::default()
    }
}

fn small_fins(seed: u64) -> FinSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureKind::ALL.map(|k| FinModel::with_arch(k, 600, 2, 3, &mut rng))
}

#[test]
fn single_class_is_learned_within_two_epochs() {
    let ws = small_set(2);
    let (mut data, _) = labeled(&ws, Split::Pretrain, 4);
    data.retain(|d| d.label == 1);
    assert!(data.len() >= 20);
    let mut m = CnnModel::<f64>::new(small_arch(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let cfg = CnnTrainConfig {
        max_epochs: 2,
        batch_size: 8,
        lr: 1e-2,
        ..CnnTrainConfig::default()
    };
    let rec = train_cnn(&mut m, &data, &cfg, 0).unwrap();
    assert!(rec.epochs_run <= 2);
    let feats: Vec<_> = data.iter().map(|d| &d.features).collect();
    let pred = predict_labels(&mut m, &feats, 32).unwrap();
    assert!(pred.iter().all(|&p| p == 1), "{pred:?}");
}

#[test]
fn cnn_training_is_deterministic() {
    let ws = small_set(2);
    let (data, _) = labeled(&ws, Split::Pretrain, 8);
    let cfg = CnnTrainConfig {
        max_epochs: 2,
        batch_size: 16,
        seed: 5,
        ..CnnTrainConfig::default()
    };
    let run = || {
        let mut m = CnnModel::<f64>::new(small_arch(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let rec = train_cnn(&mut m, &data, &cfg, 3).unwrap();
        (m, rec.train_loss)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn test_windows_are_refused() {
    let ws = small_set(2);
    let (data, _) = labeled(&ws, Split::Test, 20);
    let mut m = CnnModel::<f64>::new(small_arch(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(train_cnn(&mut m, &data, &CnnTrainConfig::default(), 0).is_err());
}

fn joint_samples(ws: &WindowSet, every: usize) -> Vec<JointSample> {
    ws.split(Split::Finetune)
        .thin(every)
        .iter()
        .map(|w| JointSample {
            window: *w,
            label: w.label,
        })
        .collect()
}

fn pretrained_cnn(ws: &WindowSet) -> CnnModel<f64> {
    let (data, _) = labeled(ws, Split::Pretrain, 10);
    let mut m = CnnModel::<f64>::new(small_arch(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let cfg = CnnTrainConfig {
        max_epochs: 1,
        batch_size: 16,
        ..CnnTrainConfig::default()
    };
    train_cnn(&mut m, &data, &cfg, 0).unwrap();
    m
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let ws = small_set(2);
    let samples = joint_samples(&ws, 40);
    let cnn0 = pretrained_cnn(&ws);
    let fins0 = small_fins(6);
    let (mut fins, mut cnn) = (fins0.clone(), cnn0.clone());
    let cfg = JointConfig {
        max_epochs: 1,
        lr: 0.0,
        val_fraction: 0.0,
        ..JointConfig::default()
    };
    finetune_joint(&mut fins, &mut cnn, &ws, &samples, &cfg, 0).unwrap();
    for (a, b) in fins.iter().zip(&fins0) {
        for ((n, p), (_, q)) in a.params().into_iter().zip(b.params()) {
            assert!(
                p.value.data().iter().zip(q.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()),
                "{n} moved"
            );
        }
    }
    for ((n, p), (_, q)) in cnn.params().into_iter().zip(cnn0.params()) {
        assert!(p.value.data().iter().zip(q.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{n} moved");
    }
}

#[test]
fn one_step_reaches_every_layer() {
    let ws = small_set(2);
    let samples: Vec<_> = joint_samples(&ws, 40).into_iter().take(4).collect();
    let cnn0 = pretrained_cnn(&ws);
    let fins0 = small_fins(7);
    let (mut fins, mut cnn) = (fins0.clone(), cnn0.clone());
    let cfg = JointConfig {
        max_epochs: 1,
        batch_windows: 4,
        val_fraction: 0.0,
        ..JointConfig::default()
    };
    finetune_joint(&mut fins, &mut cnn, &ws, &samples, &cfg, 0).unwrap();
    for (a, b) in fins.iter().zip(&fins0) {
        for ((n, p), (_, q)) in a.params().into_iter().zip(b.params()) {
            assert!(p.value != q.value, "{} {n} did not move", a.feature);
        }
    }
    for ((n, p), (_, q)) in cnn.params().into_iter().zip(cnn0.params()) {
        assert!(p.value != q.value, "cnn {n} did not move");
    }
}

#[test]
fn zero_epochs_is_the_pretrained_composition() {
    let ws = small_set(2);
    let samples = joint_samples(&ws, 40);
    let mut cnn0 = pretrained_cnn(&ws);
    let fins0 = small_fins(8);
    let (mut fins, mut cnn) = (fins0.clone(), cnn0.clone());
    let cfg = JointConfig {
        max_epochs: 0,
        ..JointConfig::default()
    };
    let rec = finetune_joint(&mut fins, &mut cnn, &ws, &samples, &cfg, 0).unwrap();
    assert_eq!(rec.epochs_run, 0);
    assert_eq!(fins, fins0);
    assert_eq!(cnn, cnn0);
    let test: Vec<_> = ws.split(Split::Test).thin(30).windows().to_vec();
    let a = joint_predict(&fins, &mut cnn, &ws, &test, 4).unwrap();
    let b = joint_predict(&fins0, &mut cnn0, &ws, &test, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn joint_tuning_keeps_batch_norm_statistics() {
    let ws = small_set(2);
    let samples: Vec<_> = joint_samples(&ws, 40).into_iter().take(8).collect();
    let cnn0 = pretrained_cnn(&ws);
    let mut fins = small_fins(9);
    let mut cnn = cnn0.clone();
    let cfg = JointConfig {
        max_epochs: 1,
        val_fraction: 0.0,
        ..JointConfig::default()
    };
    finetune_joint(&mut fins, &mut cnn, &ws, &samples, &cfg, 0).unwrap();
    for (a, b) in cnn.norms.iter().zip(&cnn0.norms) {
        assert_eq!(a.running_mean, b.running_mean);
        assert_eq!(a.running_var, b.running_var);
    }
}
