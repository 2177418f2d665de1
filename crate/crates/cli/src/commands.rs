use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use stawnet::autodiff::BackwardFault;
use stawnet::data::{
    generate_mask, make_windows, visibility, MaskMatrix, MaskSpec, Normalizer, StDataset, SynthConfig,
    TargetSelection, TimeSplit,
};
use stawnet::eval::{self, BaselineImputer, BaselineKind, Imputer, ModelImputer, OracleImputer};
use stawnet::model::{grad_check_model, ModelConfig, StawNet};
use stawnet::train::{fit, load_checkpoint, save_checkpoint, FitOptions, TrainConfig};

use crate::config::{write_echo, RunConfig};
use crate::{
    CheckFailed, EvaluateArgs, GradcheckArgs, ImputeArgs, SynthArgs, TrainArgs, CHECKPOINT, HISTORY, IMPUTED,
    PROVENANCE, REPORT, SYNTH_DATA, SYNTH_META,
};

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .map_err(stawnet::Error::from)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

fn load_data(path: &Path) -> Result<StDataset> {
    StDataset::load_csv(path).with_context(|| format!("cannot load {}", path.display()))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig::new(args.nodes, args.steps, args.seed);
    let ds = cfg.generate()?;
    create_dir(&args.out)?;
    ds.save_csv(args.out.join(SYNTH_DATA))?;
    cfg.save_metadata(args.out.join(SYNTH_META))?;
    println!(
        "wrote {} steps x {} sensors to {}",
        ds.n_steps(),
        ds.n_nodes(),
        args.out.join(SYNTH_DATA).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    data: &'a Path,
    out: &'a Path,
    init_seed: u64,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    mask: &'a MaskSpec,
    fit: &'a FitOptions,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = args.data {
        cfg.data = Some(d);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if let Some(r) = args.rate {
        cfg.mask.missing_rate = r;
    }
    if let Some(s) = args.seed {
        cfg.mask.seed = s;
        cfg.train.seed = s;
        cfg.init_seed = s;
    }
    if let Some(lr) = args.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(e) = args.epochs {
        cfg.train.max_epochs = e;
    }
    if args.max_steps.is_some() {
        cfg.train.max_steps = args.max_steps;
    }
    let data: PathBuf = cfg
        .data
        .clone()
        .ok_or_else(|| stawnet::Error::Config("no dataset given (--data or \"data\")".into()))?;
    let out: PathBuf = cfg
        .out
        .clone()
        .ok_or_else(|| stawnet::Error::Config("no output directory given (--out or \"out\")".into()))?;
    let spec = cfg.mask_spec()?;
    cfg.train.validate()?;
    cfg.model.build(1)?;

    let ds = load_data(&data)?;
    let model = cfg.model.build(ds.n_nodes())?;
    create_dir(&out)?;
    write_echo(
        &out,
        "train",
        TrainEcho {
            data: &data,
            out: &out,
            init_seed: cfg.init_seed,
            model: &model,
            train: &cfg.train,
            mask: &spec,
            fit: &cfg.fit,
        },
    )?;
    let fitted = fit(&ds, model, cfg.init_seed, &cfg.train, &spec, &cfg.fit, |e| {
        let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("epoch {:>4}  train {:.6e}  val {}  {:.1}s", e.epoch, e.train_loss, val, e.seconds);
    })?;
    save_checkpoint(
        out.join(CHECKPOINT),
        &fitted.net,
        fitted.history.steps() as u64,
        Some(&fitted.normalizer),
    )?;
    fitted.history.save_csv(out.join(HISTORY))?;
    println!(
        "trained {} steps over {} epochs; best validation loss {}",
        fitted.history.steps(),
        fitted.history.epochs.len(),
        fitted
            .history
            .best_val_loss
            .map_or("-".to_string(), |v| format!("{v:.6e}"))
    );
    Ok(())
}

/// The checkpoint's normalizer, or one fitted on the visible training split.
fn normalizer_for(ds: &StDataset, stored: Option<Normalizer>) -> Result<Normalizer> {
    match stored {
        Some(n) => Ok(n),
        None => Ok(Normalizer::fit(ds, TimeSplit::new(ds.n_steps()).train, ds.native_mask())?),
    }
}

fn model_imputer(ds: &StDataset, path: &Path) -> Result<ModelImputer> {
    let ck = load_checkpoint(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    ck.ensure_nodes(ds.n_nodes())?;
    let normalizer = normalizer_for(ds, ck.normalizer)?;
    Ok(ModelImputer::new(ck.net, normalizer))
}

#[derive(Serialize)]
struct EvaluateEcho<'a> {
    data: &'a Path,
    checkpoint: Option<&'a Path>,
    rates: &'a [f64],
    baselines: Vec<&'static str>,
    seed: u64,
    mask_seeds: Vec<u64>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    for &r in &args.rates {
        MaskSpec::new(r, 0)?;
    }
    let kinds: Vec<BaselineKind> = if args.baselines.iter().any(|b| b == "none") {
        Vec::new()
    } else {
        args.baselines
            .iter()
            .map(|b| b.parse())
            .collect::<stawnet::Result<_>>()?
    };
    let ds = load_data(&args.data)?;
    let mut methods: Vec<Box<dyn Imputer>> = Vec::new();
    let mut normalizer = None;
    if let Some(path) = &args.checkpoint {
        let m = model_imputer(&ds, path)?;
        normalizer = Some(m.normalizer.clone());
        methods.push(Box::new(m));
    }
    methods.extend(kinds.iter().map(|&k| Box::new(BaselineImputer(k)) as Box<dyn Imputer>));
    if args.oracle {
        methods.push(Box::new(OracleImputer));
    }
    if methods.is_empty() {
        return Err(stawnet::Error::Argument("nothing to evaluate: give a checkpoint or baselines".into()).into());
    }
    let name = args
        .data
        .file_stem()
        .map_or("data".to_string(), |s| s.to_string_lossy().into_owned());
    let refs: Vec<&dyn Imputer> = methods.iter().map(|m| m.as_ref()).collect();
    let report = eval::evaluate(&refs, &ds, &name, &args.rates, args.seed, normalizer.as_ref())?;
    create_dir(&args.out)?;
    report.save_json(args.out.join(REPORT))?;
    write_echo(
        &args.out,
        "evaluate",
        EvaluateEcho {
            data: &args.data,
            checkpoint: args.checkpoint.as_deref(),
            rates: &args.rates,
            baselines: kinds.iter().map(|k| k.name()).collect(),
            seed: args.seed,
            mask_seeds: (0..args.rates.len()).map(|i| eval::rate_seed(args.seed, i)).collect(),
        },
    )?;
    print!("{}", report.table());
    Ok(())
}

#[derive(Serialize)]
struct ImputeEcho<'a> {
    data: &'a Path,
    checkpoint: &'a Path,
    rate: f64,
    seed: u64,
}

pub fn impute(args: ImputeArgs) -> Result<()> {
    let spec = MaskSpec::new(args.rate, args.seed)?;
    let ds = load_data(&args.data)?;
    let imputer = model_imputer(&ds, &args.checkpoint)?;
    let mask = if args.rate > 0.0 {
        generate_mask(&ds, &spec)?
    } else {
        MaskMatrix::new(ds.n_steps(), ds.n_nodes(), false)
    };
    let result = imputer.impute(&ds, &mask)?;
    let n = ds.n_nodes();
    create_dir(&args.out)?;
    let mut f = fs::File::create(args.out.join(IMPUTED))?;
    ds.write_matrix_csv(&mut f, |t, i| format!("{}", result.values[t * n + i]))?;
    let mut f = fs::File::create(args.out.join(PROVENANCE))?;
    ds.write_matrix_csv(&mut f, |t, i| result.provenance[t * n + i].to_string())?;
    write_echo(
        &args.out,
        "impute",
        ImputeEcho {
            data: &args.data,
            checkpoint: &args.checkpoint,
            rate: args.rate,
            seed: args.seed,
        },
    )?;
    let count = |code| result.provenance.iter().filter(|&&p| p == code).count();
    println!(
        "imputed {} entries ({} by linear-interpolation fallback)",
        count(eval::IMPUTED) + count(eval::FALLBACK),
        count(eval::FALLBACK)
    );
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?.model.build(args.nodes)?,
        None => ModelConfig::tiny(args.nodes)?,
    };
    let net = StawNet::new(cfg.clone(), args.seed)?;
    let ds = SynthConfig::new(args.nodes, cfg.window_len() * 3, args.seed).generate()?;
    let mask = generate_mask(&ds, &MaskSpec::new(0.3, args.seed)?)?;
    let norm = Normalizer::fit(&ds, 0..ds.n_steps(), &visibility(&ds, &mask))?;
    let sample = make_windows(
        &ds,
        &mask,
        &norm,
        cfg.past_steps,
        cfg.future_steps,
        0..ds.n_steps(),
        TargetSelection::AllObserved,
    )
    .next()
    .ok_or_else(|| stawnet::Error::EmptyDataset("no window to check".into()))?;
    let fault = args.corrupt_backward.then_some(BackwardFault::TanhScale(1.5));
    let report = grad_check_model(&net, &sample, 1e-5, 1e-4, fault)?;

    let width = report.inputs.iter().map(|r| r.name.len()).max().unwrap_or(9).max(9);
    println!("{:<width$} {:>8} {:>8} {:>12}", "parameter", "checked", "kinks", "max_rel_err");
    for r in &report.inputs {
        println!("{:<width$} {:>8} {:>8} {:>12.3e}", r.name, r.checked, r.excluded.len(), r.max_rel_error);
    }
    println!("max relative error: {:.3e} (tolerance {:e})", report.max_rel_error(), report.tolerance);
    if report.passed() {
        Ok(())
    } else {
        Err(CheckFailed(format!(
            "gradient check failed: max relative error {:.3e} >= {:e}",
            report.max_rel_error(),
            report.tolerance
        ))
        .into())
    }
}
