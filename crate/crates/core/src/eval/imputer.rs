use crate::data::{make_windows, visibility, MaskMatrix, Normalizer, StDataset, TargetSelection};
use crate::error::{Error, Result};
use crate::model::StawNet;

use super::baselines::{baseline_impute, BaselineKind};

/// Provenance code of an entry kept from the input.
pub const ORIGINAL: u8 = 0;
/// Provenance code of an entry estimated by the method itself.
pub const IMPUTED: u8 = 1;
/// Provenance code of an entry filled by linear interpolation because the
/// method could not reach it.
pub const FALLBACK: u8 = 2;

/// A completed matrix (time-major) and where each entry came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    pub values: Vec<f64>,
    pub provenance: Vec<u8>,
}

pub trait Imputer {
    fn name(&self) -> String;

    /// Fills every entry that is natively missing or marked in `eval_mask`,
    /// using only the remaining visible entries.
    fn impute(&self, dataset: &StDataset, eval_mask: &MaskMatrix) -> Result<Imputation>;
}

fn provenance_of(visible: &MaskMatrix) -> Vec<u8> {
    visible.bits().iter().map(|&v| if v { ORIGINAL } else { IMPUTED }).collect()
}

pub struct BaselineImputer(pub BaselineKind);

impl Imputer for BaselineImputer {
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    fn impute(&self, dataset: &StDataset, eval_mask: &MaskMatrix) -> Result<Imputation> {
        let visible = visibility(dataset, eval_mask);
        Ok(Imputation {
            values: baseline_impute(self.0, dataset, &visible)?,
            provenance: provenance_of(&visible),
        })
    }
}

/// Test fixture that "imputes" by reading back the hidden ground truth.
pub struct OracleImputer;

impl Imputer for OracleImputer {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn impute(&self, dataset: &StDataset, eval_mask: &MaskMatrix) -> Result<Imputation> {
        let visible = visibility(dataset, eval_mask);
        let fill = baseline_impute(BaselineKind::LinearInterpolation, dataset, dataset.native_mask())?;
        Ok(Imputation {
            values: fill,
            provenance: provenance_of(&visible),
        })
    }
}

/// Imputes each hidden time step from its own window.
pub struct ModelImputer {
    pub net: StawNet,
    pub normalizer: Normalizer,
    pub name: String,
}

impl ModelImputer {
    pub fn new(net: StawNet, normalizer: Normalizer) -> Self {
        ModelImputer {
            net,
            normalizer,
            name: "stawnet".to_string(),
        }
    }
}

impl Imputer for ModelImputer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn impute(&self, dataset: &StDataset, eval_mask: &MaskMatrix) -> Result<Imputation> {
        let cfg = self.net.config();
        let nodes = dataset.n_nodes();
        if cfg.num_nodes != nodes || self.normalizer.nodes() != nodes {
            return Err(Error::config(format!(
                "model expects {} sensors but the data has {nodes}",
                cfg.num_nodes
            )));
        }
        let visible = visibility(dataset, eval_mask);
        let mut values = dataset.values().to_vec();
        let mut provenance = provenance_of(&visible);
        let mut done = visible.clone();
        let stream = make_windows(
            dataset,
            eval_mask,
            &self.normalizer,
            cfg.past_steps,
            cfg.future_steps,
            0..dataset.n_steps(),
            TargetSelection::AnyHidden,
        );
        for sample in stream {
            let pred = self.net.predict_sample(&sample)?;
            let t = sample.target_index;
            for (n, &p) in pred.iter().enumerate() {
                if !visible.get(t, n) {
                    let v = self.normalizer.denormalize(n, p);
                    if !v.is_finite() {
                        return Err(Error::NumericalAbort {
                            epoch: 0,
                            batch: t,
                            learning_rate: 0.0,
                        });
                    }
                    values[t * nodes + n] = v;
                    done.set(t, n, true);
                }
            }
        }
        if done.count() < done.bits().len() {
            let fill = baseline_impute(BaselineKind::LinearInterpolation, dataset, &visible)?;
            for (i, &ok) in done.bits().iter().enumerate() {
                if !ok {
                    values[i] = fill[i];
                    provenance[i] = FALLBACK;
                }
            }
        }
        Ok(Imputation { values, provenance })
    }
}
