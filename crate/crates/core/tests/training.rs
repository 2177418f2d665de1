use proptest::prelude::*;
use stawnet::data::{generate_mask, generate_synthetic, make_windows, MaskSpec, Normalizer, TargetSelection, TimeSplit, WindowSample};
use stawnet::model::{ModelConfig, StawNet};
use stawnet::train::{
    clip_global_norm, decode_checkpoint, encode_checkpoint, fit, load_checkpoint, masked_loss, save_checkpoint, train,
    FitOptions, TrainConfig, TrainingTargets,
};
use stawnet::Error;

struct Problem {
    train: Vec<WindowSample>,
    val: Vec<WindowSample>,
    cfg: ModelConfig,
}

fn problem(nodes: usize, steps: usize, seed: u64) -> Problem {
    let ds = generate_synthetic(nodes, steps, seed).unwrap();
    let mask = generate_mask(&ds, &MaskSpec::new(0.3, seed).unwrap()).unwrap();
    let split = TimeSplit::new(steps);
    let norm = Normalizer::fit(&ds, split.train.clone(), &ds.native_mask().and_not(&mask)).unwrap();
    let w = |r: std::ops::Range<usize>| make_windows(&ds, &mask, &norm, 2, 2, r, TargetSelection::EvalMasked).collect();
    Problem {
        train: w(split.train.clone()),
        val: w(split.val.clone()),
        cfg: ModelConfig::tiny(nodes).unwrap(),
    }
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs: 3,
        seed,
        learning_rate: 3e-3,
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let p = problem(3, 120, 1);
    let mut net = StawNet::new(p.cfg.clone(), 2).unwrap();
    let before = net.params().clone();
    let cfg = TrainConfig { learning_rate: 0.0, ..quick(1) };
    let h = train(&mut net, &p.train, &p.val, &cfg).unwrap();
    assert_eq!(net.params(), &before);
    let first = h.epochs[0].train_loss;
    assert!(h.epochs.iter().all(|e| (e.train_loss - first).abs() <= 1e-12 * first));
}

#[test]
fn identical_seeds_reproduce_the_loss_trajectory() {
    let p = problem(3, 200, 4);
    let run = || {
        let mut net = StawNet::new(p.cfg.clone(), 5).unwrap();
        let cfg = TrainConfig { max_steps: Some(10), max_epochs: 50, ..quick(6) };
        train(&mut net, &p.train, &p.val, &cfg).unwrap().step_losses
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn best_validation_parameters_are_restored() {
    let p = problem(3, 200, 8);
    let mut net = StawNet::new(p.cfg.clone(), 1).unwrap();
    let cfg = TrainConfig { max_epochs: 8, learning_rate: 0.02, ..quick(2) };
    let h = train(&mut net, &p.train, &p.val, &cfg).unwrap();
    let recorded: Vec<f64> = h.epochs.iter().map(|e| e.val_loss.unwrap()).collect();
    let min = recorded.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_val_loss, Some(min));
    assert_eq!(masked_loss(&net, &p.val).unwrap(), Some(min));
}

#[test]
fn patience_stops_training() {
    let p = problem(3, 120, 3);
    let mut net = StawNet::new(p.cfg.clone(), 1).unwrap();
    let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 50, patience: 2, ..quick(1) };
    let h = train(&mut net, &p.train, &p.val, &cfg).unwrap();
    assert!(h.stopped_early);
    assert_eq!(h.epochs.len(), 3);
    assert_eq!(h.best_epoch, Some(1));
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let p = problem(3, 120, 3);
    let mut net = StawNet::new(p.cfg.clone(), 1).unwrap();
    let cfg = TrainConfig { learning_rate: 1e300, ..quick(1) };
    match train(&mut net, &p.train, &p.val, &cfg) {
        Err(Error::NumericalAbort { epoch, learning_rate, .. }) => {
            assert_eq!(epoch, 1);
            assert_eq!(learning_rate, 1e300);
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { learning_rate: -1.0, ..Default::default() },
        TrainConfig { grad_clip_norm: 0.0, ..Default::default() },
        TrainConfig { patience: 0, ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn early_loss_decreases_in_most_seeded_runs() {
    let mut monotone = 0;
    for seed in 0..20 {
        let p = problem(4, 160, 100 + seed);
        let mut net = StawNet::new(p.cfg.clone(), seed).unwrap();
        let h = train(&mut net, &p.train, &[], &quick(seed)).unwrap();
        let l: Vec<f64> = h.epochs.iter().map(|e| e.train_loss).collect();
        if l.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 19, "{monotone} of 20 runs were monotone");
}

#[test]
fn fit_trains_on_dense_resampled_targets() {
    let ds = generate_synthetic(3, 150, 2).unwrap();
    let cfg = ModelConfig::tiny(3).unwrap();
    let tc = TrainConfig { max_epochs: 2, ..quick(1) };
    let spec = MaskSpec::new(0.2, 3).unwrap();
    for options in [
        FitOptions::default(),
        FitOptions { targets: TrainingTargets::Masked, resample_mask: false },
        FitOptions { targets: TrainingTargets::AllObserved, resample_mask: false },
        FitOptions { targets: TrainingTargets::Masked, resample_mask: true },
    ] {
        let f = fit(&ds, cfg.clone(), 1, &tc, &spec, &options, |_| {}).unwrap();
        assert_eq!(f.history.epochs.len(), 2);
        assert_eq!(f.mask, generate_mask(&ds, &spec).unwrap());
        assert!(f.net.params().is_finite());
    }
    let wrong = ModelConfig::tiny(4).unwrap();
    assert!(matches!(
        fit(&ds, wrong, 1, &tc, &spec, &FitOptions::default(), |_| {}),
        Err(Error::Config(_))
    ));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let p = problem(3, 120, 3);
    let mut net = StawNet::new(p.cfg.clone(), 1).unwrap();
    train(&mut net, &p.train, &[], &quick(1)).unwrap();
    let norm = Normalizer { mean: vec![50.1, 0.1 + 0.2, -3.0], std: vec![1.0 / 3.0, 2.0, 7.5e-9] };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&path, &net, 17, Some(&norm)).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.step, 17);
    assert_eq!(ck.normalizer.as_ref(), Some(&norm));
    for (a, b) in net.params().tensors().iter().zip(ck.net.params().tensors()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    for s in &p.train[..5] {
        let x = net.predict_sample(s).unwrap();
        let y = ck.net.predict_sample(s).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    assert!(matches!(ck.ensure_nodes(4), Err(Error::Config(_))));
    ck.ensure_nodes(3).unwrap();
}

#[test]
fn corrupt_checkpoints_are_format_errors() {
    let net = StawNet::new(ModelConfig::tiny(3).unwrap(), 1).unwrap();
    let bytes = encode_checkpoint(&net, 0, None).unwrap();
    assert!(decode_checkpoint(&bytes).is_ok());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_header = bytes.clone();
    bad_header[20] = b'#';
    let truncated = &bytes[..bytes.len() - 8];
    let mut trailing = bytes.clone();
    trailing.push(0);
    let mut huge_len = bytes.clone();
    huge_len[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
    for b in [&bad_magic[..], &bad_header, truncated, &trailing, &huge_len, &bytes[..10]] {
        assert!(matches!(decode_checkpoint(b), Err(Error::Format(_))), "{:?}", decode_checkpoint(b).err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipped_norm_never_exceeds_the_bound(
        grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 1..20), 1..6),
        max_norm in 1e-3f64..10.0,
    ) {
        let mut g = grads.clone();
        let before = clip_global_norm(&mut g, max_norm);
        let after = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(after <= max_norm + 1e-9);
        if before <= max_norm {
            prop_assert_eq!(g, grads);
        }
    }
}
