//! The imputation network.
//!
//! A window `[1, N, T_w]` of values plus its visibility mask is projected to
//! `C` channels and passed through a stack of blocks. Each block applies a
//! gated dilated convolution along time (shortening the window by
//! `(k-1) * d`), layer-normalizes the result, and lets every sensor attend to
//! every other sensor at each remaining time step using queries and keys built
//! from the hidden state concatenated with a learned node embedding. Blocks
//! are joined by cropped residual connections; the last time step of every
//! gated convolution output is projected into a shared skip sum that feeds a
//! two-layer ReLU head producing one value per sensor.

mod config;
mod loss;
mod params;

pub use config::{solve_dilations, ModelConfig};
pub use loss::{masked_mse, masked_mse_loss, masked_sse};
pub use params::{BlockParams, BlockVars, HeadParams, HeadVars, ModelParams, ParamVars};

use crate::autodiff::{grad_check_many, BackwardFault, GradCheckReport, Tape, Tensor, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Projects the concatenated (value, mask) channels to the hidden width.
pub fn input_projection(tape: &mut Tape, x: Var, m: Var, proj: Var) -> Result<Var> {
    if tape.shape(x) != tape.shape(m) {
        return Err(Error::dim(format!(
            "value window {:?} and mask window {:?} differ",
            tape.shape(x),
            tape.shape(m)
        )));
    }
    let xm = tape.concat_channels(x, m)?;
    tape.conv1x1(xm, proj)
}

/// `tanh(filter * x) ⊙ sigmoid(gate * x)` with dilated valid convolutions.
pub fn gated_tcn(tape: &mut Tape, x: Var, filter: Var, gate: Var, dilation: usize) -> Result<Var> {
    let steps = tape.shape(x).get(2).copied().unwrap_or(0);
    let k = tape.shape(filter).get(2).copied().unwrap_or(0);
    if k > 0 && steps <= (k - 1) * dilation {
        return Err(Error::config(format!(
            "window of {steps} steps is too short for kernel {k} at dilation {dilation}"
        )));
    }
    let f = tape.conv1d_dilated(x, filter, dilation)?;
    let g = tape.conv1d_dilated(x, gate, dilation)?;
    let f = tape.tanh(f)?;
    let g = tape.sigmoid(g)?;
    tape.mul(f, g)
}

/// Attention weights `[N, N, T]` for hidden states `h: [C, N, T]`.
///
/// `alpha[i, j, t] = softmax_j(<W_q (h_i || e_i), W_k (h_j || e_j)> / sqrt(d'))`.
pub fn attention_scores(tape: &mut Tape, h: Var, embeddings: Var, query: Var, key: Var) -> Result<Var> {
    let steps = match tape.shape(h) {
        [_, _, t] => *t,
        s => return Err(Error::dim(format!("hidden state must be [C, N, T], got {s:?}"))),
    };
    let attn_dim = tape.shape(query)[0];
    let e = tape.expand_time(embeddings, steps)?;
    let z = tape.concat_channels(h, e)?;
    let q = tape.conv1x1(z, query)?;
    let k = tape.conv1x1(z, key)?;
    let scores = tape.node_scores(q, k)?;
    let scores = tape.scale(scores, 1.0 / (attn_dim as f64).sqrt())?;
    tape.softmax(scores, 1)
}

/// Attention across sensors at every time step; returns `(output, alpha)`.
pub fn dan_forward(tape: &mut Tape, h: Var, embeddings: Var, query: Var, key: Var) -> Result<(Var, Var)> {
    let alpha = attention_scores(tape, h, embeddings, query, key)?;
    let out = tape.node_mix(alpha, h)?;
    Ok((out, alpha))
}

/// Values recorded for one block.
#[derive(Clone, Copy, Debug)]
pub struct BlockTrace {
    /// Gated convolution output `[C, N, T_l]`.
    pub tcn_out: Var,
    /// Attention weights `[N, N, T_l]`.
    pub attention: Var,
    /// Attention output `[C, N, T_l]`.
    pub attended: Var,
    /// Block output after the residual sum `[C, N, T_l]`.
    pub output: Var,
    /// Skip projection of the final time step `[skip_channels, N, 1]`.
    pub skip: Var,
}

pub fn st_block_forward(
    tape: &mut Tape,
    x_prev: Var,
    block: &BlockVars,
    embeddings: Var,
    dilation: usize,
) -> Result<BlockTrace> {
    let tcn_out = gated_tcn(tape, x_prev, block.filter, block.gate, dilation)?;
    let steps = tape.shape(tcn_out)[2];
    let last = tape.slice_time(tcn_out, steps - 1, 1)?;
    let skip = tape.conv1x1(last, block.skip_proj)?;
    let normed = tape.layer_norm(tcn_out, block.norm_gain, block.norm_bias, LAYER_NORM_EPS)?;
    let (attended, attention) = dan_forward(tape, normed, embeddings, block.query, block.key)?;
    let prev_steps = tape.shape(x_prev)[2];
    let residual = tape.slice_time(x_prev, prev_steps - steps, steps)?;
    let output = tape.add(attended, residual)?;
    Ok(BlockTrace {
        tcn_out,
        attention,
        attended,
        output,
        skip,
    })
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Var,
    pub blocks: Vec<BlockTrace>,
    pub skip_sum: Var,
    /// Normalized estimate for every sensor at the target step, shape `[N]`.
    pub prediction: Var,
}

/// Network architecture together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StawNet {
    config: ModelConfig,
    params: ModelParams,
}

impl StawNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(StawNet { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let tensors = params.tensors().into_iter().cloned().collect();
        let params = ModelParams::from_tensors(&config, tensors)?;
        Ok(StawNet { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        self.params.register(tape, trainable)
    }

    /// Records one forward pass for a `[1, N, T_w]` value window and its mask.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        x_window: &Tensor,
        m_window: &Tensor,
    ) -> Result<ForwardTrace> {
        let cfg = &self.config;
        cfg.validate()?;
        let expected = [1, cfg.num_nodes, cfg.window_len()];
        if x_window.shape() != expected || m_window.shape() != expected {
            return Err(Error::dim(format!(
                "window must be {expected:?}, got values {:?} and mask {:?}",
                x_window.shape(),
                m_window.shape()
            )));
        }
        let x = tape.constant(x_window.detached());
        let m = tape.constant(m_window.detached());
        let input = input_projection(tape, x, m, vars.input_proj)?;

        let mut h = input;
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        let mut skip_sum: Option<Var> = None;
        for (block, &dilation) in vars.blocks.iter().zip(&cfg.dilations) {
            let trace = st_block_forward(tape, h, block, vars.node_embeddings, dilation)?;
            skip_sum = Some(match skip_sum {
                None => trace.skip,
                Some(acc) => tape.add(acc, trace.skip)?,
            });
            h = trace.output;
            blocks.push(trace);
        }
        if tape.shape(h)[2] != 1 {
            return Err(Error::config(format!(
                "final temporal length is {} instead of 1",
                tape.shape(h)[2]
            )));
        }
        let skip_sum = skip_sum.ok_or_else(|| Error::config("model has no blocks"))?;

        let hv = &vars.head;
        let z = tape.relu(skip_sum)?;
        let z = tape.conv1x1(z, hv.hidden_weight)?;
        let z = tape.add_channel_bias(z, hv.hidden_bias)?;
        let z = tape.relu(z)?;
        let z = tape.conv1x1(z, hv.out_weight)?;
        let z = tape.add_channel_bias(z, hv.out_bias)?;
        let prediction = tape.reshape(z, vec![cfg.num_nodes])?;
        Ok(ForwardTrace {
            input,
            blocks,
            skip_sum,
            prediction,
        })
    }

    pub fn forward_sample(&self, tape: &mut Tape, vars: &ParamVars, sample: &WindowSample) -> Result<ForwardTrace> {
        self.forward(tape, vars, &sample.x_window, &sample.m_window)
    }

    /// Normalized estimates for all sensors at the window's target step.
    pub fn predict(&self, x_window: &Tensor, m_window: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let trace = self.forward(&mut tape, &vars, x_window, m_window)?;
        Ok(tape.value(trace.prediction).data().to_vec())
    }

    pub fn predict_sample(&self, sample: &WindowSample) -> Result<Vec<f64>> {
        self.predict(&sample.x_window, &sample.m_window)
    }
}

/// Finite-difference check of the masked MSE of `sample` with respect to every
/// parameter of `net`.
pub fn grad_check_model(
    net: &StawNet,
    sample: &WindowSample,
    step: f64,
    tolerance: f64,
    fault: Option<BackwardFault>,
) -> Result<GradCheckReport> {
    if sample.target_count() == 0 {
        return Err(Error::Argument("sample has no scored entries".into()));
    }
    let inputs: Vec<(String, Tensor)> = net
        .params()
        .named()
        .into_iter()
        .map(|(name, t)| (name, t.detached()))
        .collect();
    grad_check_many(
        |tape, vars| {
            let pv = ParamVars::from_slice(net.config(), vars)?;
            let trace = net.forward_sample(tape, &pv, sample)?;
            masked_mse_loss(tape, trace.prediction, &sample.x_true_t, &sample.eval_mask_t)?
                .ok_or_else(|| Error::Argument("sample has no scored entries".into()))
        },
        &inputs,
        step,
        tolerance,
        fault,
    )
}
