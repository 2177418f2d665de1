use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stawnet::data::MaskSpec;
use stawnet::model::{solve_dilations, ModelConfig};
use stawnet::train::{FitOptions, TrainConfig};

/// Architecture settings; the sensor count comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_blocks: usize,
    pub channels: usize,
    pub kernel_size: usize,
    /// Solved from the window when absent.
    pub dilations: Option<Vec<usize>>,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub skip_channels: usize,
    pub head_channels: usize,
    pub past_steps: usize,
    pub future_steps: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::new(1).expect("default architecture is valid");
        ModelSection {
            num_blocks: d.num_blocks,
            channels: d.channels,
            kernel_size: d.kernel_size,
            dilations: None,
            embed_dim: d.embed_dim,
            attn_dim: d.attn_dim,
            skip_channels: d.skip_channels,
            head_channels: d.head_channels,
            past_steps: d.past_steps,
            future_steps: d.future_steps,
        }
    }
}

impl ModelSection {
    pub fn build(&self, num_nodes: usize) -> stawnet::Result<ModelConfig> {
        let dilations = match &self.dilations {
            Some(d) => d.clone(),
            None => solve_dilations(self.num_blocks, self.past_steps + self.future_steps, self.kernel_size)?,
        };
        let cfg = ModelConfig {
            num_nodes,
            num_blocks: self.num_blocks,
            channels: self.channels,
            kernel_size: self.kernel_size,
            dilations,
            embed_dim: self.embed_dim,
            attn_dim: self.attn_dim,
            skip_channels: self.skip_channels,
            head_channels: self.head_channels,
            past_steps: self.past_steps,
            future_steps: self.future_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            missing_rate: 0.2,
            seed: 0,
        }
    }
}

/// Settings file for `train` (and the architecture for `gradcheck`).
/// Flags given on the command line override the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub mask: MaskSection,
    pub fit: FitOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| stawnet::Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn mask_spec(&self) -> stawnet::Result<MaskSpec> {
        MaskSpec::new(self.mask.missing_rate, self.mask.seed)
    }
}

/// What a command actually ran with, written as `run_config.json`.
#[derive(Debug, Serialize)]
pub struct Echo<'a, T: Serialize> {
    pub command: &'a str,
    #[serde(flatten)]
    pub settings: T,
}

pub fn write_echo<T: Serialize>(out: &Path, command: &str, settings: T) -> anyhow::Result<()> {
    let echo = Echo { command, settings };
    std::fs::write(out.join(crate::RUN_CONFIG), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}
