use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCKS: usize = 4;
pub const DEFAULT_CHANNELS: usize = 32;
pub const DEFAULT_KERNEL: usize = 2;
pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_ATTN_DIM: usize = 64;
pub const DEFAULT_SKIP_CHANNELS: usize = 64;
pub const DEFAULT_HEAD_CHANNELS: usize = 32;
pub const DEFAULT_PAST: usize = 6;
pub const DEFAULT_FUTURE: usize = 6;

/// Architecture hyperparameters.
///
/// The dilations must consume the whole window: `sum((k-1) * d) == past + future`,
/// so the last block emits a single time step aligned with the target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_nodes: usize,
    pub num_blocks: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub skip_channels: usize,
    pub head_channels: usize,
    pub past_steps: usize,
    pub future_steps: usize,
}

impl ModelConfig {
    /// Default architecture for `num_nodes` sensors.
    pub fn new(num_nodes: usize) -> Result<Self> {
        Self::with_shape(
            num_nodes,
            DEFAULT_BLOCKS,
            DEFAULT_CHANNELS,
            DEFAULT_PAST,
            DEFAULT_FUTURE,
        )
    }

    /// Builds a configuration with default widths and solved dilations.
    pub fn with_shape(
        num_nodes: usize,
        num_blocks: usize,
        channels: usize,
        past_steps: usize,
        future_steps: usize,
    ) -> Result<Self> {
        let mut cfg = ModelConfig {
            num_nodes,
            num_blocks,
            channels,
            kernel_size: DEFAULT_KERNEL,
            dilations: Vec::new(),
            embed_dim: DEFAULT_EMBED_DIM,
            attn_dim: DEFAULT_ATTN_DIM,
            skip_channels: DEFAULT_SKIP_CHANNELS,
            head_channels: DEFAULT_HEAD_CHANNELS,
            past_steps,
            future_steps,
        };
        cfg.solve_dilations()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The small architecture used for finite-difference checks.
    pub fn tiny(num_nodes: usize) -> Result<Self> {
        let mut cfg = Self::with_shape(num_nodes, 2, 4, 2, 2)?;
        cfg.embed_dim = 2;
        cfg.attn_dim = 3;
        cfg.skip_channels = 4;
        cfg.head_channels = 4;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window_len(&self) -> usize {
        self.past_steps + self.future_steps + 1
    }

    /// Width of the query/key inputs: hidden channels plus embedding size.
    pub fn attn_input_dim(&self) -> usize {
        self.channels + self.embed_dim
    }

    /// Recomputes `dilations` by doubling from 1, restarting at 1 whenever the
    /// next power would starve later blocks, and giving the last block the
    /// remainder of the receptive field.
    pub fn solve_dilations(&mut self) -> Result<()> {
        self.dilations = solve_dilations(
            self.num_blocks,
            self.past_steps + self.future_steps,
            self.kernel_size,
        )?;
        Ok(())
    }

    /// Temporal length entering the first block and after each block.
    pub fn temporal_lengths(&self) -> Vec<usize> {
        let mut lens = vec![self.window_len()];
        for &d in &self.dilations {
            let prev = *lens.last().unwrap();
            lens.push(prev.saturating_sub((self.kernel_size - 1) * d));
        }
        lens
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_nodes", self.num_nodes),
            ("num_blocks", self.num_blocks),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("attn_dim", self.attn_dim),
            ("skip_channels", self.skip_channels),
            ("head_channels", self.head_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.kernel_size < 2 {
            return Err(Error::config("kernel_size must be at least 2"));
        }
        if self.dilations.len() != self.num_blocks {
            return Err(Error::config(format!(
                "expected {} dilations (one per block), got {}",
                self.num_blocks,
                self.dilations.len()
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::config("dilations must be positive"));
        }
        let consumed: usize = self.dilations.iter().map(|d| (self.kernel_size - 1) * d).sum();
        let window = self.past_steps + self.future_steps;
        if consumed != window {
            return Err(Error::config(format!(
                "receptive field invariant violated: sum((k-1)*d) = {consumed} but past + future = {window}"
            )));
        }
        Ok(())
    }
}

pub fn solve_dilations(num_blocks: usize, receptive: usize, kernel_size: usize) -> Result<Vec<usize>> {
    if num_blocks == 0 {
        return Err(Error::config("num_blocks must be positive"));
    }
    if kernel_size < 2 {
        return Err(Error::config("kernel_size must be at least 2"));
    }
    let step = kernel_size - 1;
    if receptive % step != 0 {
        return Err(Error::config(format!(
            "past + future = {receptive} is not a multiple of kernel_size - 1 = {step}"
        )));
    }
    let mut remaining = receptive / step;
    if remaining < num_blocks {
        return Err(Error::config(format!(
            "window of {receptive} steps cannot be consumed by {num_blocks} blocks with kernel {kernel_size}"
        )));
    }
    let mut dilations = Vec::with_capacity(num_blocks);
    let mut next = 1;
    for block in 0..num_blocks {
        let later = num_blocks - block - 1;
        let d = if later == 0 {
            remaining
        } else {
            if next > remaining - later {
                next = 1;
            }
            let d = next;
            next *= 2;
            d
        };
        dilations.push(d);
        remaining -= d;
    }
    Ok(dilations)
}
