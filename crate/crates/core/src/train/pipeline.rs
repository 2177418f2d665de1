use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::{train_with, EpochRecord, TrainConfig, TrainHistory};
use crate::data::{
    generate_mask, make_windows, visibility, MaskMatrix, MaskSpec, Normalizer, StDataset, TargetSelection, TimeSplit,
};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, StawNet};

/// Which entries at a training step contribute to the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingTargets {
    /// Only the artificially hidden entries.
    Masked,
    /// Every observed entry of the (fully hidden) target step.
    #[default]
    AllObserved,
}

/// Defaults to dense targets on a mask redrawn every epoch, which generalizes
/// noticeably better than fitting the hidden entries of one fixed mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub targets: TrainingTargets,
    /// Draw a fresh training-split mask at the same rate every epoch.
    pub resample_mask: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            targets: TrainingTargets::AllObserved,
            resample_mask: true,
        }
    }
}

/// Everything produced by [`fit`].
#[derive(Clone, Debug)]
pub struct Fitted {
    pub net: StawNet,
    pub normalizer: Normalizer,
    pub history: TrainHistory,
    /// The evaluation mask drawn from the run's mask spec.
    pub mask: MaskMatrix,
    pub split: TimeSplit,
}

/// Seed of the training mask used in `epoch` when masks are resampled.
pub fn epoch_mask_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64))
}

/// Hides entries per `mask_spec`, splits along time, fits the normalizer on
/// visible training entries and trains a freshly initialized network.
///
/// Training targets lie in the training split; validation scores the hidden
/// entries of the validation split.
pub fn fit<O: FnMut(&EpochRecord)>(
    dataset: &StDataset,
    model: ModelConfig,
    init_seed: u64,
    train_cfg: &TrainConfig,
    mask_spec: &MaskSpec,
    options: &FitOptions,
    observer: O,
) -> Result<Fitted> {
    model.validate()?;
    train_cfg.validate()?;
    if model.num_nodes != dataset.n_nodes() {
        return Err(Error::config(format!(
            "model expects {} sensors but the data has {}",
            model.num_nodes,
            dataset.n_nodes()
        )));
    }
    if dataset.n_steps() < model.window_len() {
        return Err(Error::config(format!(
            "series of {} steps is shorter than the {}-step window",
            dataset.n_steps(),
            model.window_len()
        )));
    }
    let mask = generate_mask(dataset, mask_spec)?;
    let split = TimeSplit::new(dataset.n_steps());
    let normalizer = Normalizer::fit(dataset, split.train.clone(), &visibility(dataset, &mask))?;
    let (past, future) = (model.past_steps, model.future_steps);
    let selection = match options.targets {
        TrainingTargets::Masked => TargetSelection::EvalMasked,
        TrainingTargets::AllObserved => TargetSelection::AllObserved,
    };
    let val: Vec<_> = make_windows(dataset, &mask, &normalizer, past, future, split.val.clone(), TargetSelection::EvalMasked)
        .collect();
    let fixed: Vec<_> = if options.resample_mask {
        Vec::new()
    } else {
        make_windows(dataset, &mask, &normalizer, past, future, split.train.clone(), selection).collect()
    };

    let mut net = StawNet::new(model, init_seed)?;
    let history = train_with(
        &mut net,
        |epoch| {
            if !options.resample_mask {
                return Ok(Cow::Borrowed(&fixed[..]));
            }
            let spec = MaskSpec {
                seed: epoch_mask_seed(mask_spec.seed, epoch),
                ..*mask_spec
            };
            // rows beyond the training split keep the run's mask so held-out truth stays hidden
            let fresh = generate_mask(dataset, &spec)?.restrict_rows(split.train.clone());
            let epoch_mask = fresh.or(&mask.restrict_rows(split.train.end..dataset.n_steps()));
            let samples =
                make_windows(dataset, &epoch_mask, &normalizer, past, future, split.train.clone(), selection).collect();
            Ok(Cow::Owned(samples))
        },
        &val,
        train_cfg,
        observer,
    )?;
    Ok(Fitted {
        net,
        normalizer,
        history,
        mask,
        split,
    })
}
