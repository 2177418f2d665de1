use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::StDataset;
use crate::error::{Error, Result};

/// Ring-graph diffusion with a seasonal drive:
///
/// `s[t+1, n] = s[t, n] + beta * (s[t, n-1] + s[t, n+1] - 2 s[t, n])
///              + A sin(2 pi t / P + phi_n) + noise`
///
/// with `phi_n = phase_spread * n / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub beta: f64,
    pub amplitude: f64,
    pub period: f64,
    pub noise_std: f64,
    /// Offset between the seasonal phases of the first and last sensor.
    pub phase_spread: f64,
    /// Steps simulated and discarded before recording.
    pub burn_in: usize,
    pub base_level: f64,
    /// Std of the initial per-sensor deviation from `base_level`.
    pub initial_spread: f64,
    pub interval_minutes: u32,
}

impl SynthConfig {
    pub fn new(n_nodes: usize, n_steps: usize, seed: u64) -> Self {
        SynthConfig {
            n_nodes,
            n_steps,
            seed,
            beta: 0.2,
            amplitude: 1.0,
            period: 144.0,
            noise_std: 0.05,
            phase_spread: PI / 4.0,
            burn_in: 144,
            base_level: 50.0,
            initial_spread: 1.0,
            interval_minutes: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::Argument("synthetic data needs at least 2 sensors".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Argument("synthetic data needs at least 1 step".into()));
        }
        if !(self.period > 0.0) || !(self.noise_std >= 0.0) || !(self.initial_spread >= 0.0) {
            return Err(Error::Argument("period must be positive and spreads non-negative".into()));
        }
        if self.interval_minutes == 0 {
            return Err(Error::Argument("interval must be positive".into()));
        }
        let finite = [self.beta, self.amplitude, self.phase_spread, self.base_level];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("synthetic parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn phase(&self, node: usize) -> f64 {
        self.phase_spread * node as f64 / self.n_nodes as f64
    }

    pub fn generate(&self) -> Result<StDataset> {
        self.validate()?;
        let n = self.n_nodes;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let init = Normal::new(0.0, self.initial_spread).map_err(|e| Error::Argument(e.to_string()))?;
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::Argument(e.to_string()))?;
        let mut s: Vec<f64> = (0..n).map(|_| self.base_level + init.sample(&mut rng)).collect();
        let mut next = vec![0.0; n];
        let mut values = Vec::with_capacity(self.n_steps * n);
        for step in 0..self.burn_in + self.n_steps {
            if step >= self.burn_in {
                values.extend_from_slice(&s);
            }
            for i in 0..n {
                let left = s[(i + n - 1) % n];
                let right = s[(i + 1) % n];
                let season = self.amplitude * (2.0 * PI * step as f64 / self.period + self.phase(i)).sin();
                next[i] = s[i] + self.beta * (left + right - 2.0 * s[i]) + season + noise.sample(&mut rng);
            }
            std::mem::swap(&mut s, &mut next);
        }
        StDataset::from_matrix(values, self.n_steps, n, self.interval_minutes, None)
    }

    pub fn save_metadata(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Ring diffusion with the default parameters.
pub fn generate_synthetic(n_nodes: usize, n_steps: usize, seed: u64) -> Result<StDataset> {
    SynthConfig::new(n_nodes, n_steps, seed).generate()
}
