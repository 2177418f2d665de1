use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const EMBEDDING_INIT_STD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    /// `[C, C, k]` filter branch of the gated convolution.
    pub filter: Tensor,
    /// `[C, C, k]` gate branch.
    pub gate: Tensor,
    /// `[d', C + D]`
    pub query: Tensor,
    /// `[d', C + D]`
    pub key: Tensor,
    pub norm_gain: Tensor,
    pub norm_bias: Tensor,
    /// `[skip_channels, C]`
    pub skip_proj: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
}

/// Every learnable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `[C, 2]` projection of (value, mask).
    pub input_proj: Tensor,
    /// `[N, D]` per-sensor embeddings.
    pub node_embeddings: Tensor,
    pub blocks: Vec<BlockParams>,
    pub head: HeadParams,
}

/// Parameter leaves recorded on a tape, mirroring [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub input_proj: Var,
    pub node_embeddings: Var,
    pub blocks: Vec<BlockVars>,
    pub head: HeadVars,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub filter: Var,
    pub gate: Var,
    pub query: Var,
    pub key: Var,
    pub norm_gain: Var,
    pub norm_bias: Var,
    pub skip_proj: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub hidden_weight: Var,
    pub hidden_bias: Var,
    pub out_weight: Var,
    pub out_bias: Var,
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape from config")
}

fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape).expect("shape from config")
}

impl ModelParams {
    /// Fan-in scaled uniform weights, normal node embeddings, zero biases and
    /// unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let k = cfg.kernel_size;
        let dc = cfg.attn_input_dim();
        let input_proj = uniform(&[c, 2], 2, &mut rng);
        let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
        let emb: Vec<f64> = (0..cfg.num_nodes * cfg.embed_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let node_embeddings = Tensor::new(vec![cfg.num_nodes, cfg.embed_dim], emb)?;
        let blocks = (0..cfg.num_blocks)
            .map(|_| BlockParams {
                filter: uniform(&[c, c, k], c * k, &mut rng),
                gate: uniform(&[c, c, k], c * k, &mut rng),
                query: uniform(&[cfg.attn_dim, dc], dc, &mut rng),
                key: uniform(&[cfg.attn_dim, dc], dc, &mut rng),
                norm_gain: Tensor::full(&[c], 1.0).expect("shape from config"),
                norm_bias: zeros(&[c]),
                skip_proj: uniform(&[cfg.skip_channels, c], c, &mut rng),
            })
            .collect();
        let head = HeadParams {
            hidden_weight: uniform(&[cfg.head_channels, cfg.skip_channels], cfg.skip_channels, &mut rng),
            hidden_bias: zeros(&[cfg.head_channels]),
            out_weight: uniform(&[1, cfg.head_channels], cfg.head_channels, &mut rng),
            out_bias: zeros(&[1]),
        };
        Ok(ModelParams {
            input_proj,
            node_embeddings,
            blocks,
            head,
        })
    }

    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        let mut p = Self::init(cfg, 0)?;
        p.tensors_mut()
            .into_iter()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
        Ok(p)
    }

    /// Tensors in canonical order with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("input_proj".to_string(), &self.input_proj),
            ("node_embeddings".to_string(), &self.node_embeddings),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{l}.filter"), &b.filter));
            out.push((format!("block{l}.gate"), &b.gate));
            out.push((format!("block{l}.query"), &b.query));
            out.push((format!("block{l}.key"), &b.key));
            out.push((format!("block{l}.norm_gain"), &b.norm_gain));
            out.push((format!("block{l}.norm_bias"), &b.norm_bias));
            out.push((format!("block{l}.skip_proj"), &b.skip_proj));
        }
        out.push(("head.hidden_weight".to_string(), &self.head.hidden_weight));
        out.push(("head.hidden_bias".to_string(), &self.head.hidden_bias));
        out.push(("head.out_weight".to_string(), &self.head.out_weight));
        out.push(("head.out_bias".to_string(), &self.head.out_bias));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input_proj, &mut self.node_embeddings];
        for b in &mut self.blocks {
            out.push(&mut b.filter);
            out.push(&mut b.gate);
            out.push(&mut b.query);
            out.push(&mut b.key);
            out.push(&mut b.norm_gain);
            out.push(&mut b.norm_bias);
            out.push(&mut b.skip_proj);
        }
        out.push(&mut self.head.hidden_weight);
        out.push(&mut self.head.hidden_bias);
        out.push(&mut self.head.out_weight);
        out.push(&mut self.head.out_bias);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Rebuilds parameters from tensors in canonical order, checking every
    /// shape against `cfg`.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let mut expected = Self::zeros(cfg)?;
        let slots = expected.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::config(format!(
                    "parameter shape {:?} does not match configuration shape {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.detached();
        }
        Ok(expected)
    }

    /// Records every parameter as a leaf. With `trainable` the leaves require
    /// gradients.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut leaf = |t: &Tensor| {
            let mut v = t.detached();
            v.set_requires_grad(trainable);
            tape.leaf(v)
        };
        ParamVars {
            input_proj: leaf(&self.input_proj),
            node_embeddings: leaf(&self.node_embeddings),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockVars {
                    filter: leaf(&b.filter),
                    gate: leaf(&b.gate),
                    query: leaf(&b.query),
                    key: leaf(&b.key),
                    norm_gain: leaf(&b.norm_gain),
                    norm_bias: leaf(&b.norm_bias),
                    skip_proj: leaf(&b.skip_proj),
                })
                .collect(),
            head: HeadVars {
                hidden_weight: leaf(&self.head.hidden_weight),
                hidden_bias: leaf(&self.head.hidden_bias),
                out_weight: leaf(&self.head.out_weight),
                out_bias: leaf(&self.head.out_bias),
            },
        }
    }
}

impl ParamVars {
    /// Rebuilds the structure from leaves listed in canonical order.
    pub fn from_slice(cfg: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let expected = 2 + 7 * cfg.num_blocks + 4;
        if vars.len() != expected {
            return Err(Error::config(format!("expected {expected} parameter leaves, got {}", vars.len())));
        }
        let blocks = vars[2..2 + 7 * cfg.num_blocks]
            .chunks(7)
            .map(|c| BlockVars {
                filter: c[0],
                gate: c[1],
                query: c[2],
                key: c[3],
                norm_gain: c[4],
                norm_bias: c[5],
                skip_proj: c[6],
            })
            .collect();
        let h = &vars[expected - 4..];
        Ok(ParamVars {
            input_proj: vars[0],
            node_embeddings: vars[1],
            blocks,
            head: HeadVars {
                hidden_weight: h[0],
                hidden_bias: h[1],
                out_weight: h[2],
                out_bias: h[3],
            },
        })
    }

    /// Leaves in the same order as [`ModelParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.input_proj, self.node_embeddings];
        for b in &self.blocks {
            out.extend([
                b.filter,
                b.gate,
                b.query,
                b.key,
                b.norm_gain,
                b.norm_bias,
                b.skip_proj,
            ]);
        }
        out.extend([
            self.head.hidden_weight,
            self.head.hidden_bias,
            self.head.out_weight,
            self.head.out_bias,
        ]);
        out
    }
}
