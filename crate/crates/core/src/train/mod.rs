//! Adam training on the count-weighted masked squared error, with early
//! stopping on validation loss and binary checkpoints.

mod adam;
mod checkpoint;
mod pipeline;

pub use adam::{adam_step, clip_global_norm, AdamState, BETA1, BETA2, EPSILON};
pub use pipeline::{epoch_mask_seed, fit, FitOptions, Fitted, TrainingTargets};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use std::borrow::Cow;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{masked_sse, StawNet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            grad_clip_norm: 5.0,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::config("grad_clip_norm must be positive"));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Count-weighted loss over the epoch's batches, each measured before its update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn steps(&self) -> usize {
        self.step_losses.len()
    }

    /// `epoch,train_loss,val_loss,seconds`; a missing validation loss is left empty.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "epoch,train_loss,val_loss,seconds")?;
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{:.3}", e.epoch, e.train_loss, val, e.seconds)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.write_csv(&mut f)
    }
}

/// Loss and parameter gradients for one batch, or `None` if nothing in it is scored.
pub fn batch_gradients(net: &StawNet, batch: &[&WindowSample]) -> Result<Option<(f64, usize, Vec<Vec<f64>>)>> {
    let mut tape = Tape::new();
    let vars = net.register(&mut tape, true);
    let mut total = None;
    let mut count = 0;
    for sample in batch {
        if sample.target_count() == 0 {
            continue;
        }
        let trace = net.forward_sample(&mut tape, &vars, sample)?;
        let (sse, c) = masked_sse(&mut tape, trace.prediction, &sample.x_true_t, &sample.eval_mask_t)?;
        count += c;
        total = Some(match total {
            None => sse,
            Some(acc) => tape.add(acc, sse)?,
        });
    }
    let Some(total) = total else { return Ok(None) };
    let loss = tape.scale(total, 1.0 / count as f64)?;
    tape.backward(loss)?;
    let grads = vars
        .all()
        .into_iter()
        .map(|v| tape.grad(v).expect("trainable leaf").into_data())
        .collect();
    Ok(Some((tape.value(loss).data()[0], count, grads)))
}

/// Count-weighted masked MSE of `samples` under `net`; `None` when nothing is scored.
pub fn masked_loss(net: &StawNet, samples: &[WindowSample]) -> Result<Option<f64>> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for s in samples {
        if s.target_count() == 0 {
            continue;
        }
        let pred = net.predict_sample(s)?;
        for ((p, y), m) in pred.iter().zip(&s.x_true_t).zip(&s.eval_mask_t) {
            if *m != 0.0 {
                sse += (p - y) * (p - y);
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| sse / count as f64))
}

/// Trains on a fixed set of samples.
pub fn train(
    net: &mut StawNet,
    train_samples: &[WindowSample],
    val_samples: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_with(net, |_| Ok(Cow::Borrowed(train_samples)), val_samples, cfg, |_| {})
}

/// Trains with a per-epoch sample source (`epoch` is 1-based) and reports
/// every finished epoch to `observer`.
///
/// When validation samples are given, the parameters with the lowest
/// validation loss are restored at the end and training stops after
/// `patience` epochs without improvement.
pub fn train_with<'a, S, O>(
    net: &mut StawNet,
    mut source: S,
    val_samples: &[WindowSample],
    cfg: &TrainConfig,
    mut observer: O,
) -> Result<TrainHistory>
where
    S: FnMut(usize) -> Result<Cow<'a, [WindowSample]>>,
    O: FnMut(&EpochRecord),
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(net.params().tensors());
    let mut history = TrainHistory::default();
    let mut best_params = None;
    let mut since_best = 0;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let samples = source(epoch)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        let mut epoch_count = 0;
        let mut capped = false;
        for (batch_id, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let Some((loss, count, mut grads)) = batch_gradients(net, &batch)? else {
                continue;
            };
            let abort = Error::NumericalAbort {
                epoch,
                batch: batch_id,
                learning_rate: cfg.learning_rate,
            };
            if !loss.is_finite() {
                return Err(abort);
            }
            let norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
            if !norm.is_finite() {
                return Err(abort);
            }
            adam_step(&mut net.params_mut().tensors_mut(), &grads, &mut adam, cfg.learning_rate)?;
            if !net.params().is_finite() {
                return Err(abort);
            }
            history.step_losses.push(loss);
            epoch_sse += loss * count as f64;
            epoch_count += count;
            if cfg.max_steps.is_some_and(|m| history.steps() >= m) {
                capped = true;
                break;
            }
        }
        if epoch_count == 0 {
            return Err(Error::EmptyDataset("no scored entries in the training samples".into()));
        }
        let val_loss = masked_loss(net, val_samples)?;
        if val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort {
                epoch,
                batch: 0,
                learning_rate: cfg.learning_rate,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_sse / epoch_count as f64,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer(&record);
        history.epochs.push(record);

        if let Some(v) = val_loss {
            if history.best_val_loss.is_none_or(|b| v < b) {
                history.best_val_loss = Some(v);
                history.best_epoch = Some(epoch);
                best_params = Some(net.params().clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    history.stopped_early = true;
                    break 'epochs;
                }
            }
        }
        if capped {
            break;
        }
    }
    if let Some(best) = best_params {
        *net.params_mut() = best;
    }
    Ok(history)
}
