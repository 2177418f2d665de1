//! Acceptance criteria. Each test prints one PASS/FAIL line with the measured
//! value and runtime, then asserts.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stawnet::autodiff::{Tape, Tensor};
use stawnet::data::{
    generate_mask, generate_synthetic, make_windows, visibility, MaskSpec, Normalizer, StDataset, TargetSelection,
    TimeSplit, WindowSample,
};
use stawnet::eval::{
    evaluate, evaluation_masks, metrics, rate_seed, score, BaselineImputer, BaselineKind, Imputer, ModelImputer,
    DEFAULT_RATES,
};
use stawnet::model::{grad_check_model, ModelConfig, StawNet};
use stawnet::train::{decode_checkpoint, encode_checkpoint, fit, masked_loss, train, FitOptions, Fitted, TrainConfig};

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "[{status}] criterion {id:>2}: {name} -- {detail} ({:.2}s)",
        elapsed.as_secs_f64()
    );
}

fn random_window(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> WindowSample {
    let (n, len) = (cfg.num_nodes, cfg.window_len());
    let mut x = vec![0.0; n * len];
    let mut m = vec![0.0; n * len];
    for i in 0..n * len {
        if i % len != cfg.past_steps && rng.random_bool(0.8) {
            x[i] = rng.random_range(-2.0..2.0);
            m[i] = 1.0;
        }
    }
    WindowSample {
        x_window: Tensor::new(vec![1, n, len], x).unwrap(),
        m_window: Tensor::new(vec![1, n, len], m).unwrap(),
        target_index: cfg.past_steps,
        x_true_t: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        eval_mask_t: vec![1.0; n],
    }
}

#[test]
fn criterion_01_full_model_gradient_check() {
    let start = Instant::now();
    let cfg = ModelConfig::tiny(3).unwrap();
    assert_eq!((cfg.num_nodes, cfg.channels, cfg.num_blocks), (3, 4, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = StawNet::new(cfg.clone(), 1).unwrap();
    let r = grad_check_model(&net, &random_window(&cfg, &mut rng), 1e-5, 1e-4, None).unwrap();
    let elapsed = start.elapsed();
    let err = r.max_rel_error();
    let pass = err < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        1,
        "finite-difference gradient check",
        pass,
        format!("max rel err {err:.2e} < 1e-4 over {} tensors, {} kinks excluded", r.inputs.len(), r.excluded()),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_02_temporal_shape_contract() {
    let start = Instant::now();
    let cfg = ModelConfig::new(8).unwrap();
    let mut expected = vec![cfg.window_len()];
    for &d in &cfg.dilations {
        expected.push(expected.last().unwrap() - (cfg.kernel_size - 1) * d);
    }
    let net = StawNet::new(cfg.clone(), 0).unwrap();
    let mut tape = Tape::new();
    let vars = net.register(&mut tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trace = net.forward_sample(&mut tape, &vars, &random_window(&cfg, &mut rng)).unwrap();
    let mut observed = vec![tape.shape(trace.input)[2]];
    observed.extend(trace.blocks.iter().map(|b| tape.shape(b.output)[2]));
    let elapsed = start.elapsed();
    let pass = observed == expected
        && *observed.last().unwrap() == 1
        && cfg.temporal_lengths() == expected
        && tape.shape(trace.prediction) == [8]
        && elapsed < Duration::from_secs(1);
    report(
        2,
        "per-block temporal lengths",
        pass,
        format!("dilations {:?}, lengths {observed:?}", cfg.dilations),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_attention_rows_sum_to_one() {
    let start = Instant::now();
    let cfg = ModelConfig::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for pass_id in 0..100 {
        let net = StawNet::new(cfg.clone(), pass_id).unwrap();
        let mut tape = Tape::new();
        let vars = net.register(&mut tape, false);
        let trace = net.forward_sample(&mut tape, &vars, &random_window(&cfg, &mut rng)).unwrap();
        for b in &trace.blocks {
            let a = tape.value(b.attention);
            let (n, steps) = (a.shape()[0], a.shape()[2]);
            for i in 0..n {
                for s in 0..steps {
                    let sum: f64 = (0..n).map(|j| a.at(&[i, j, s])).sum();
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-8 && elapsed < Duration::from_secs(10);
    report(
        3,
        "attention normalization",
        pass,
        format!("max |row sum - 1| = {worst:.2e} over 100 forward passes"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_04_hidden_entries_cannot_leak() {
    let start = Instant::now();
    let ds = generate_synthetic(8, 200, 4).unwrap();
    let mask = generate_mask(&ds, &MaskSpec::new(0.3, 4).unwrap()).unwrap();
    let norm = Normalizer::fit(&ds, 0..140, &visibility(&ds, &mask)).unwrap();
    let net = StawNet::new(ModelConfig::new(8).unwrap(), 4).unwrap();
    let outputs = |sentinel: f64| -> Vec<u64> {
        let values = ds
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask.bits()[i] { sentinel } else { v })
            .collect();
        let poisoned = ds.with_values(values).unwrap();
        make_windows(&poisoned, &mask, &norm, 6, 6, 0..200, TargetSelection::AnyHidden)
            .flat_map(|w| net.predict_sample(&w).unwrap())
            .map(f64::to_bits)
            .collect()
    };
    let a = outputs(9.75e8);
    let b = outputs(-3.1e12);
    let elapsed = start.elapsed();
    let pass = !a.is_empty() && a == b && elapsed < Duration::from_secs(10);
    report(
        4,
        "leak-freedom",
        pass,
        format!("{} outputs bitwise identical under two sentinels", a.len()),
        elapsed,
    );
    assert!(pass);
}

/// The benchmark instance shared by criteria 5 and 6.
struct Benchmark {
    ds: StDataset,
    fitted: Fitted,
    train_seconds: f64,
}

const BENCH_NODES: usize = 8;
const BENCH_STEPS: usize = 512;
const BENCH_SEED: u64 = 7;
const BENCH_RATE: f64 = 0.2;
const BENCH_MAX_STEPS: usize = 2000;

fn benchmark() -> &'static Benchmark {
    static CELL: OnceLock<Benchmark> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = generate_synthetic(BENCH_NODES, BENCH_STEPS, BENCH_SEED).unwrap();
        let cfg = ModelConfig::new(BENCH_NODES).unwrap();
        let tc = TrainConfig {
            max_steps: Some(BENCH_MAX_STEPS),
            max_epochs: 10_000,
            patience: 10_000,
            seed: BENCH_SEED,
            ..Default::default()
        };
        let start = Instant::now();
        let fitted = fit(
            &ds,
            cfg,
            BENCH_SEED,
            &tc,
            &MaskSpec::new(BENCH_RATE, BENCH_SEED).unwrap(),
            &FitOptions::default(),
            |_| {},
        )
        .unwrap();
        Benchmark {
            ds,
            fitted,
            train_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_05_overfit_benchmark() {
    let b = benchmark();
    let start = Instant::now();
    let f = &b.fitted;
    let train_windows: Vec<_> = make_windows(
        &b.ds,
        &f.mask,
        &f.normalizer,
        6,
        6,
        f.split.train.clone(),
        TargetSelection::EvalMasked,
    )
    .collect();
    let mse = masked_loss(&f.net, &train_windows).unwrap().unwrap();
    let total = b.train_seconds + start.elapsed().as_secs_f64();
    let steps = f.history.steps();
    let pass = mse < 1e-2 && steps <= BENCH_MAX_STEPS && total < 600.0;
    report(
        5,
        "overfit benchmark",
        pass,
        format!("training masked MSE {mse:.3e} < 1e-2 after {steps} Adam steps"),
        Duration::from_secs_f64(total),
    );
    assert!(pass);
}

#[test]
fn criterion_06_beats_linear_interpolation() {
    let b = benchmark();
    let start = Instant::now();
    let f = &b.fitted;
    let model = ModelImputer::new(f.net.clone(), f.normalizer.clone());
    let linear = BaselineImputer(BaselineKind::LinearInterpolation);
    let mut ratios = Vec::new();
    for (i, rate) in [(0, 0.2), (2, 0.6)] {
        let (mask, scored) = evaluation_masks(&b.ds, rate, rate_seed(BENCH_SEED, i)).unwrap();
        let m = score(&b.ds, &model.impute(&b.ds, &mask).unwrap(), &scored).unwrap();
        let l = score(&b.ds, &linear.impute(&b.ds, &mask).unwrap(), &scored).unwrap();
        ratios.push((rate, m.mae, l.mae, m.mae / l.mae));
    }
    let total = b.train_seconds + start.elapsed().as_secs_f64();
    let pass = ratios[0].3 <= 0.9 && ratios[1].3 <= 1.0 && total < 900.0;
    let detail = ratios
        .iter()
        .map(|(p, m, l, r)| format!("p={p}: model MAE {m:.4} / linear {l:.4} = {r:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    report(
        6,
        "beat linear interpolation (<= 0.9 at p=0.2, <= 1.0 at p=0.6)",
        pass,
        detail,
        Duration::from_secs_f64(total),
    );
    assert!(pass);
}

#[test]
fn criterion_07_mask_statistics() {
    let start = Instant::now();
    let ds = StDataset::from_matrix(vec![1.0; 20_000 * 8], 20_000, 8, 5, None).unwrap();
    let observed = ds.native_mask().count();
    let mut worst: f64 = 0.0;
    let mut fractions = Vec::new();
    for (i, p) in DEFAULT_RATES.into_iter().enumerate() {
        let m = generate_mask(&ds, &MaskSpec::new(p, rate_seed(7, i)).unwrap()).unwrap();
        let frac = m.count() as f64 / observed as f64;
        worst = worst.max((frac - p).abs());
        fractions.push(format!("{frac:.4}"));
    }
    let elapsed = start.elapsed();
    let pass = observed >= 100_000 && worst <= 0.005 && elapsed < Duration::from_secs(5);
    report(
        7,
        "mask statistics",
        pass,
        format!("{observed} entries, fractions [{}], max deviation {worst:.4}", fractions.join(", ")),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_determinism() {
    let start = Instant::now();
    let ds = generate_synthetic(8, 256, 8).unwrap();
    let run = || {
        let mask = generate_mask(&ds, &MaskSpec::new(0.2, 8).unwrap()).unwrap();
        let split = TimeSplit::new(256);
        let norm = Normalizer::fit(&ds, split.train.clone(), &visibility(&ds, &mask)).unwrap();
        let windows: Vec<_> =
            make_windows(&ds, &mask, &norm, 6, 6, split.train.clone(), TargetSelection::EvalMasked).collect();
        let mut net = StawNet::new(ModelConfig::new(8).unwrap(), 8).unwrap();
        let tc = TrainConfig {
            max_steps: Some(10),
            seed: 8,
            ..Default::default()
        };
        let h = train(&mut net, &windows, &[], &tc).unwrap();
        (mask, h.step_losses)
    };
    let (m1, l1) = run();
    let (m2, l2) = run();
    let max_diff = l1.iter().zip(&l2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = l1.len() == 10 && l2.len() == 10 && max_diff <= 1e-12 && m1 == m2 && elapsed < Duration::from_secs(60);
    report(
        8,
        "determinism",
        pass,
        format!("first 10 losses max diff {max_diff:.1e}, masks identical: {}", m1 == m2),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_09_metric_identities() {
    let start = Instant::now();
    let two = metrics(&[2.0, 4.0], &[1.0, 2.0], &[true, true]).unwrap();
    let example = two.mae == 1.5 && two.rmse == 2.5f64.sqrt() && two.mape == Some(0.5);
    let ds = generate_synthetic(4, 300, 9).unwrap();
    let b: Vec<BaselineImputer> = BaselineKind::ALL.into_iter().map(BaselineImputer).collect();
    let methods: Vec<&dyn Imputer> = b.iter().map(|m| m as &dyn Imputer).collect();
    let r = evaluate(&methods, &ds, "synthetic", &DEFAULT_RATES, 9, None).unwrap();
    let ordered = r.rows.iter().all(|row| row.rmse >= row.mae && row.mae >= 0.0 && row.n_eval > 0);
    let elapsed = start.elapsed();
    let pass = example && ordered && elapsed < Duration::from_secs(1);
    report(
        9,
        "metric identities",
        pass,
        format!(
            "two-point MAE {} RMSE {:.4} MAPE {:?}; RMSE >= MAE on {} report rows",
            two.mae,
            two.rmse,
            two.mape,
            r.rows.len()
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_10_checkpoint_round_trip() {
    let start = Instant::now();
    let cfg = ModelConfig::new(8).unwrap();
    let net = StawNet::new(cfg.clone(), 10).unwrap();
    let norm = Normalizer {
        mean: (0..8).map(|i| 50.0 + i as f64 / 3.0).collect(),
        std: (0..8).map(|i| 0.1 + i as f64 / 7.0).collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.bin");
    std::fs::write(&path, encode_checkpoint(&net, 123, Some(&norm)).unwrap()).unwrap();
    let back = decode_checkpoint(&std::fs::read(&path).unwrap()).unwrap();
    let params_equal = net
        .params()
        .tensors()
        .iter()
        .zip(back.net.params().tensors())
        .all(|(a, b)| a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let outputs_equal = (0..20).all(|_| {
        let w = random_window(&cfg, &mut rng);
        let x = net.predict_sample(&w).unwrap();
        let y = back.net.predict_sample(&w).unwrap();
        x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    let elapsed = start.elapsed();
    let pass = params_equal && outputs_equal && back.normalizer == Some(norm) && elapsed < Duration::from_secs(10);
    report(
        10,
        "checkpoint round trip",
        pass,
        format!(
            "{} parameters bitwise equal: {params_equal}, forward outputs bitwise equal: {outputs_equal}",
            net.params().num_scalars()
        ),
        elapsed,
    );
    assert!(pass);
}
