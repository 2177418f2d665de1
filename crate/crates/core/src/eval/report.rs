use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub missing_rate: f64,
    pub method: String,
    pub mae: f64,
    /// `null` when undefined (every scored truth near zero).
    pub mape: Option<f64>,
    pub rmse: f64,
    pub n_eval: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    /// Adds a row after checking `rmse >= mae >= 0` and `n_eval > 0`.
    pub fn push(&mut self, dataset: &str, missing_rate: f64, method: &str, m: Metrics) -> Result<()> {
        // allow for the last-bit rounding of sqrt when every error has the same size
        if m.n_eval == 0 || m.mae < 0.0 || m.rmse < m.mae * (1.0 - 4.0 * f64::EPSILON) {
            return Err(Error::Argument(format!(
                "inconsistent metrics for {method} at rate {missing_rate}: mae {} rmse {} n {}",
                m.mae, m.rmse, m.n_eval
            )));
        }
        self.rows.push(MetricsRow {
            dataset: dataset.to_string(),
            missing_rate,
            method: method.to_string(),
            mae: m.mae,
            mape: m.mape,
            rmse: m.rmse,
            n_eval: m.n_eval,
        });
        Ok(())
    }

    pub fn get(&self, method: &str, missing_rate: f64) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.missing_rate == missing_rate)
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn rates(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.missing_rate) {
                out.push(r.missing_rate);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One row per method; columns grouped by rate, then MAE / MAPE / RMSE.
    pub fn table(&self) -> String {
        let rates = self.rates();
        let methods = self.methods();
        let width = methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "method");
        for r in &rates {
            let label = format!("p={:.0}%", r * 100.0);
            let _ = write!(out, " | {label:^29}");
        }
        out.push('\n');
        let _ = write!(out, "{:<width$}", "");
        for _ in &rates {
            let _ = write!(out, " | {:>9} {:>9} {:>9}", "MAE", "MAPE", "RMSE");
        }
        out.push('\n');
        for m in &methods {
            let _ = write!(out, "{m:<width$}");
            for &r in &rates {
                match self.get(m, r) {
                    Some(row) => {
                        let mape = row.mape.map_or("n/a".to_string(), |v| format!("{:.2}%", v * 100.0));
                        let _ = write!(out, " | {:>9.4} {:>9} {:>9.4}", row.mae, mape, row.rmse);
                    }
                    None => {
                        let _ = write!(out, " | {:>9} {:>9} {:>9}", "-", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
