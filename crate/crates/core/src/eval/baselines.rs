use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{MaskMatrix, StDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LinearInterpolation,
    HistoricalMean,
    LastObservation,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::LinearInterpolation,
        BaselineKind::HistoricalMean,
        BaselineKind::LastObservation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::LinearInterpolation => "linear_interpolation",
            BaselineKind::HistoricalMean => "historical_mean",
            BaselineKind::LastObservation => "last_observation",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown baseline {s:?}")))
    }
}

/// Completes the matrix: entries marked in `visible` keep their values and
/// every other entry is estimated from visible ones.
///
/// A sensor with no visible entries falls back to the mean of all visible entries.
pub fn baseline_impute(kind: BaselineKind, dataset: &StDataset, visible: &MaskMatrix) -> Result<Vec<f64>> {
    let (steps, nodes) = (dataset.n_steps(), dataset.n_nodes());
    if (visible.steps(), visible.nodes()) != (steps, nodes) {
        return Err(Error::dim("visibility mask does not match the dataset"));
    }
    let visible = visible.and(dataset.native_mask());
    let seen: Vec<f64> = (0..steps * nodes)
        .filter(|&i| visible.bits()[i])
        .map(|i| dataset.values()[i])
        .collect();
    if seen.is_empty() {
        return Err(Error::EmptyDataset("nothing visible to impute from".into()));
    }
    let global = seen.iter().sum::<f64>() / seen.len() as f64;

    let mut out = vec![0.0; steps * nodes];
    for n in 0..nodes {
        let column: Vec<Option<f64>> = (0..steps)
            .map(|t| visible.get(t, n).then(|| dataset.value(t, n)))
            .collect();
        let filled = if column.iter().all(Option::is_none) {
            vec![global; steps]
        } else {
            match kind {
                BaselineKind::LinearInterpolation => linear(&column),
                BaselineKind::LastObservation => last_observation(&column),
                BaselineKind::HistoricalMean => historical(&column, dataset),
            }
        };
        for (t, v) in filled.into_iter().enumerate() {
            out[t * nodes + n] = v;
        }
    }
    Ok(out)
}

fn linear(column: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = column
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t, v)))
        .collect();
    let mut out = Vec::with_capacity(column.len());
    let mut k = 0;
    for t in 0..column.len() {
        if let Some(v) = column[t] {
            out.push(v);
            continue;
        }
        while k + 1 < known.len() && known[k + 1].0 < t {
            k += 1;
        }
        let (t0, v0) = known[k];
        let v = if t < t0 {
            v0
        } else if let Some(&(t1, v1)) = known.get(k + 1) {
            v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
        } else {
            v0
        };
        out.push(v);
    }
    out
}

fn last_observation(column: &[Option<f64>]) -> Vec<f64> {
    let first = column.iter().flatten().next().copied().expect("column has a visible entry");
    let mut last = first;
    column
        .iter()
        .map(|v| {
            if let Some(v) = v {
                last = *v;
            }
            last
        })
        .collect()
}

fn historical(column: &[Option<f64>], dataset: &StDataset) -> Vec<f64> {
    let slots = dataset.slots_per_day();
    let mut sum = vec![0.0; slots];
    let mut count = vec![0usize; slots];
    let mut total = 0.0;
    let mut n = 0;
    for (t, v) in column.iter().enumerate() {
        if let Some(v) = v {
            let s = dataset.time_of_day_slot(t);
            sum[s] += v;
            count[s] += 1;
            total += v;
            n += 1;
        }
    }
    let sensor_mean = total / n as f64;
    column
        .iter()
        .enumerate()
        .map(|(t, v)| {
            v.unwrap_or_else(|| {
                let s = dataset.time_of_day_slot(t);
                if count[s] > 0 {
                    sum[s] / count[s] as f64
                } else {
                    sensor_mean
                }
            })
        })
        .collect()
}
