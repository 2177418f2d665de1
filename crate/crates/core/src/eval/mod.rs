//! Scoring imputations of artificially hidden entries.

mod baselines;
mod imputer;
mod metrics;
mod report;

pub use baselines::{baseline_impute, BaselineKind};
pub use imputer::{BaselineImputer, Imputation, Imputer, ModelImputer, OracleImputer, FALLBACK, IMPUTED, ORIGINAL};
pub use metrics::{metrics, Metrics, MAPE_EPSILON};
pub use report::{MetricsReport, MetricsRow};

use crate::data::{generate_mask, MaskMatrix, MaskSpec, Normalizer, StDataset, TimeSplit};
use crate::error::{Error, Result};

pub const DEFAULT_RATES: [f64; 3] = [0.2, 0.4, 0.6];

/// Mask seed for the `rate_index`-th rate of an evaluation run.
pub fn rate_seed(seed: u64, rate_index: usize) -> u64 {
    seed ^ rate_index as u64
}

/// Artificial mask for one rate, and the part of it that falls in the test split.
pub fn evaluation_masks(dataset: &StDataset, rate: f64, seed: u64) -> Result<(MaskMatrix, MaskMatrix)> {
    let mask = generate_mask(dataset, &MaskSpec::new(rate, seed)?)?;
    let scored = mask.restrict_rows(TimeSplit::new(dataset.n_steps()).test);
    Ok((mask, scored))
}

/// Scores `imputation` on the `scored` entries in data units.
pub fn score(dataset: &StDataset, imputation: &Imputation, scored: &MaskMatrix) -> Result<Metrics> {
    metrics(dataset.values(), &imputation.values, scored.bits())
}

/// Checks that ground truth survives normalization within `1e-9` (relative to
/// `max(1, |x|)`) at every scored entry.
pub fn check_round_trip(dataset: &StDataset, normalizer: &Normalizer, scored: &MaskMatrix) -> Result<()> {
    let n = dataset.n_nodes();
    for (i, _) in scored.bits().iter().enumerate().filter(|(_, &s)| s) {
        let x = dataset.values()[i];
        let back = normalizer.denormalize(i % n, normalizer.normalize(i % n, x));
        if (back - x).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::Argument(format!(
                "normalization round trip drifted at entry {i}: {x} -> {back}"
            )));
        }
    }
    Ok(())
}

/// For every rate, hides entries with seed `rate_seed(seed, i)`, lets each
/// method fill the matrix, and scores the hidden test-split entries.
pub fn evaluate(
    methods: &[&dyn Imputer],
    dataset: &StDataset,
    dataset_name: &str,
    rates: &[f64],
    seed: u64,
    normalizer: Option<&Normalizer>,
) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for (i, &rate) in rates.iter().enumerate() {
        let (mask, scored) = evaluation_masks(dataset, rate, rate_seed(seed, i))?;
        if let Some(norm) = normalizer {
            check_round_trip(dataset, norm, &scored)?;
        }
        for method in methods {
            let imputation = method.impute(dataset, &mask)?;
            let m = score(dataset, &imputation, &scored)?;
            report.push(dataset_name, rate, &method.name(), m)?;
        }
    }
    Ok(report)
}
