use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries with `|x_true|` at or below this are left out of MAPE.
pub const MAPE_EPSILON: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Ratio, not percent; `None` when every scored truth is near zero.
    pub mape: Option<f64>,
    pub n_eval: usize,
}

/// MAE, RMSE and MAPE over entries where `mask` is set.
pub fn metrics(x_true: &[f64], x_hat: &[f64], mask: &[bool]) -> Result<Metrics> {
    if x_true.len() != x_hat.len() || x_true.len() != mask.len() {
        return Err(Error::dim(format!(
            "truth {}, estimate {} and mask {} differ in length",
            x_true.len(),
            x_hat.len(),
            mask.len()
        )));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut n = 0usize;
    let mut n_pct = 0usize;
    for ((&y, &p), _) in x_true.iter().zip(x_hat).zip(mask).filter(|(_, &m)| m) {
        let d = (y - p).abs();
        abs += d;
        sq += d * d;
        n += 1;
        if y.abs() > MAPE_EPSILON {
            pct += d / y.abs();
            n_pct += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no entries to score".into()));
    }
    let m = Metrics {
        mae: abs / n as f64,
        rmse: (sq / n as f64).sqrt(),
        mape: (n_pct > 0).then(|| pct / n_pct as f64),
        n_eval: n,
    };
    if !m.mae.is_finite() || !m.rmse.is_finite() {
        return Err(Error::Argument("metrics are not finite".into()));
    }
    Ok(m)
}
