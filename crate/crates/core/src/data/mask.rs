use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{MaskMatrix, StDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Independent Bernoulli draw per entry.
    #[default]
    Random,
}

/// How to hide observed entries for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub missing_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: MaskMode,
}

impl MaskSpec {
    pub fn new(missing_rate: f64, seed: u64) -> Result<Self> {
        let spec = MaskSpec {
            missing_rate,
            seed,
            mode: MaskMode::Random,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::Argument(format!(
                "missing rate {} is outside [0, 1]",
                self.missing_rate
            )));
        }
        Ok(())
    }
}

/// Artificial missingness: `true` marks an observed entry hidden for evaluation.
///
/// One uniform draw from a ChaCha8 stream is consumed per matrix entry in
/// time-major order whether or not the entry is observed, so the hidden set
/// depends only on the seed, the rate and the matrix shape.
pub fn generate_mask(dataset: &StDataset, spec: &MaskSpec) -> Result<MaskMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let native = dataset.native_mask();
    let bits = native
        .bits()
        .iter()
        .map(|&observed| {
            let u: f64 = rng.random();
            observed && u < spec.missing_rate
        })
        .collect();
    MaskMatrix::from_bits(native.steps(), native.nodes(), bits)
}

/// Entries the model may see: natively observed and not hidden.
pub fn visibility(dataset: &StDataset, eval_mask: &MaskMatrix) -> MaskMatrix {
    dataset.native_mask().and_not(eval_mask)
}
