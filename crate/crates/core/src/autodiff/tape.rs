//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and the indices of
//! its inputs. Nodes are therefore stored in topological order and
//! [`Tape::backward`] simply walks them in reverse.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

/// Pointwise operation kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Tanh,
    Sigmoid,
    Relu,
    Add,
    Mul,
}

/// Deliberate defects in backward rules, used as negative controls for
/// gradient checking.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BackwardFault {
    /// Multiplies the tanh derivative by the given factor.
    TanhScale(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Activation {
        kind: Activation,
        input: usize,
    },
    Binary {
        kind: BinaryOp,
        lhs: usize,
        rhs: usize,
    },
    Scale {
        input: usize,
        factor: f64,
    },
    Sum {
        input: usize,
    },
    Conv1d {
        input: usize,
        weight: usize,
        dilation: usize,
    },
    Conv1x1 {
        input: usize,
        weight: usize,
    },
    ConcatChannels {
        lhs: usize,
        rhs: usize,
    },
    SliceChannels {
        input: usize,
        start: usize,
    },
    SliceTime {
        input: usize,
        start: usize,
    },
    Softmax {
        input: usize,
        axis: usize,
    },
    LayerNorm {
        input: usize,
        gain: usize,
        bias: usize,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ExpandTime {
        input: usize,
    },
    NodeScores {
        query: usize,
        key: usize,
    },
    NodeMix {
        weights: usize,
        values: usize,
    },
    AddChannelBias {
        input: usize,
        bias: usize,
    },
    Reshape {
        input: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    fault: Option<BackwardFault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    /// Records an input tensor. It is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        let mut value = tensor;
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor that is never differentiated.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let mut value = tensor;
        value.set_requires_grad(false);
        self.leaf(value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[usize]) -> Result<Var> {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    // ---- pointwise ------------------------------------------------------

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        let need_rhs = |b: Option<Var>| {
            b.ok_or_else(|| Error::Argument(format!("{op:?} is a binary operation")))
        };
        match op {
            ElementwiseOp::Tanh => self.activation(Activation::Tanh, a),
            ElementwiseOp::Sigmoid => self.activation(Activation::Sigmoid, a),
            ElementwiseOp::Relu => self.activation(Activation::Relu, a),
            ElementwiseOp::Add => self.binary(BinaryOp::Add, a, need_rhs(b)?),
            ElementwiseOp::Mul => self.binary(BinaryOp::Mul, a, need_rhs(b)?),
        }
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Result<Var> {
        let x = self.data(input);
        let data: Vec<f64> = match kind {
            Activation::Tanh => x.iter().map(|v| v.tanh()).collect(),
            Activation::Sigmoid => x.iter().map(|&v| kernels::sigmoid(v)).collect(),
            Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
        };
        let shape = self.shape(input).to_vec();
        self.push(shape, data, Op::Activation { kind, input: input.0 }, &[input.0])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Relu, x)
    }

    pub fn binary(&mut self, kind: BinaryOp, lhs: Var, rhs: Var) -> Result<Var> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::dim(format!(
                "{kind:?} operands have shapes {:?} and {:?}",
                self.shape(lhs),
                self.shape(rhs)
            )));
        }
        let (a, b) = (self.data(lhs), self.data(rhs));
        let data: Vec<f64> = match kind {
            BinaryOp::Add => a.iter().zip(b).map(|(x, y)| x + y).collect(),
            BinaryOp::Sub => a.iter().zip(b).map(|(x, y)| x - y).collect(),
            BinaryOp::Mul => a.iter().zip(b).map(|(x, y)| x * y).collect(),
        };
        let shape = self.shape(lhs).to_vec();
        self.push(
            shape,
            data,
            Op::Binary {
                kind,
                lhs: lhs.0,
                rhs: rhs.0,
            },
            &[lhs.0, rhs.0],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let data = self.data(input).iter().map(|v| v * factor).collect();
        let shape = self.shape(input).to_vec();
        self.push(
            shape,
            data,
            Op::Scale {
                input: input.0,
                factor,
            },
            &[input.0],
        )
    }

    /// Sum of all entries, as a shape `[1]` tensor.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.data(input).iter().sum();
        self.push(vec![1], vec![total], Op::Sum { input: input.0 }, &[input.0])
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(input).len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(input)
            )));
        }
        let data = self.data(input).to_vec();
        self.push(shape, data, Op::Reshape { input: input.0 }, &[input.0])
    }

    // ---- convolutions ---------------------------------------------------

    /// Dilated valid convolution along the last (time) axis, applied
    /// independently per node.
    ///
    /// `input` is `[C_in, N, T]`, `weight` is `[C_out, C_in, k]`; the result
    /// is `[C_out, N, T - (k-1)*dilation]`.
    pub fn conv1d_dilated(&mut self, input: Var, weight: Var, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(Error::Argument("dilation must be positive".into()));
        }
        let (cin, n, t) = rank3(self.shape(input), "conv1d input")?;
        let (cout, wcin, k) = rank3(self.shape(weight), "conv1d weight")?;
        if wcin != cin {
            return Err(Error::dim(format!(
                "conv1d weight expects {wcin} input channels, input has {cin}"
            )));
        }
        let span = (k - 1) * dilation;
        if t <= span {
            return Err(Error::dim(format!(
                "temporal length {t} too short for kernel {k} at dilation {dilation}"
            )));
        }
        let geom = kernels::ConvGeom {
            cin,
            cout,
            nodes: n,
            steps: t,
            kernel: k,
            dilation,
        };
        let data = kernels::conv1d_forward(self.data(input), self.data(weight), &geom);
        self.push(
            vec![cout, n, geom.out_steps()],
            data,
            Op::Conv1d {
                input: input.0,
                weight: weight.0,
                dilation,
            },
            &[input.0, weight.0],
        )
    }

    /// Per-position linear map over the channel (first) axis.
    pub fn conv1x1(&mut self, input: Var, weight: Var) -> Result<Var> {
        let in_shape = self.shape(input).to_vec();
        let w_shape = self.shape(weight);
        if w_shape.len() != 2 || in_shape.len() < 2 {
            return Err(Error::dim(format!(
                "conv1x1 needs a [C_out, C_in] weight and an input of rank >= 2, got {w_shape:?} and {in_shape:?}"
            )));
        }
        let (cout, cin) = (w_shape[0], w_shape[1]);
        if in_shape[0] != cin {
            return Err(Error::dim(format!(
                "conv1x1 weight expects {cin} input channels, input has {}",
                in_shape[0]
            )));
        }
        let positions = self.value(input).len() / cin;
        let data = kernels::matmul(self.data(weight), self.data(input), cout, cin, positions);
        let mut shape = in_shape;
        shape[0] = cout;
        self.push(
            shape,
            data,
            Op::Conv1x1 {
                input: input.0,
                weight: weight.0,
            },
            &[input.0, weight.0],
        )
    }

    pub fn add_channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if self.shape(bias) != [shape[0]] {
            return Err(Error::dim(format!(
                "bias of shape {:?} for {} channels",
                self.shape(bias),
                shape[0]
            )));
        }
        let positions = self.value(input).len() / shape[0];
        let b = self.data(bias);
        let data = self
            .data(input)
            .chunks(positions)
            .zip(b)
            .flat_map(|(row, &bv)| row.iter().map(move |v| v + bv))
            .collect();
        self.push(
            shape,
            data,
            Op::AddChannelBias {
                input: input.0,
                bias: bias.0,
            },
            &[input.0, bias.0],
        )
    }

    // ---- structural -----------------------------------------------------

    /// Concatenates along the channel (first) axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() || sa[1..] != sb[1..] {
            return Err(Error::dim(format!(
                "cannot concatenate {sa:?} and {sb:?} along channels"
            )));
        }
        let mut shape = sa.to_vec();
        shape[0] += sb[0];
        let mut data = Vec::with_capacity(shape.iter().product());
        data.extend_from_slice(self.data(a));
        data.extend_from_slice(self.data(b));
        self.push(shape, data, Op::ConcatChannels { lhs: a.0, rhs: b.0 }, &[a.0, b.0])
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if len == 0 || start + len > shape[0] {
            return Err(Error::dim(format!(
                "channel slice {start}..{} out of range for {shape:?}",
                start + len
            )));
        }
        let per = self.value(input).len() / shape[0];
        let data = self.data(input)[start * per..(start + len) * per].to_vec();
        let mut out = shape;
        out[0] = len;
        self.push(out, data, Op::SliceChannels { input: input.0, start }, &[input.0])
    }

    /// Keeps time steps `start..start+len` of a `[C, N, T]` tensor.
    pub fn slice_time(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let (c, n, t) = rank3(self.shape(input), "slice_time input")?;
        if len == 0 || start + len > t {
            return Err(Error::dim(format!(
                "time slice {start}..{} out of range for length {t}",
                start + len
            )));
        }
        let x = self.data(input);
        let mut data = Vec::with_capacity(c * n * len);
        for row in x.chunks(t) {
            data.extend_from_slice(&row[start..start + len]);
        }
        self.push(vec![c, n, len], data, Op::SliceTime { input: input.0, start }, &[input.0])
    }

    /// Broadcasts `[N, D]` embeddings to a `[D, N, steps]` channel-major tensor.
    pub fn expand_time(&mut self, input: Var, steps: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 2 || steps == 0 {
            return Err(Error::dim(format!(
                "expand_time needs an [N, D] input and positive steps, got {s:?}"
            )));
        }
        let (n, d) = (s[0], s[1]);
        let e = self.data(input);
        let mut data = Vec::with_capacity(d * n * steps);
        for dim in 0..d {
            for node in 0..n {
                let v = e[node * d + dim];
                data.extend(std::iter::repeat_n(v, steps));
            }
        }
        self.push(vec![d, n, steps], data, Op::ExpandTime { input: input.0 }, &[input.0])
    }

    // ---- normalization and attention -------------------------------------

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(Error::Argument(format!(
                "softmax axis {axis} for rank {}",
                shape.len()
            )));
        }
        let data = kernels::softmax_forward(self.data(input), &shape, axis);
        self.push(shape, data, Op::Softmax { input: input.0, axis }, &[input.0])
    }

    /// Normalizes over the channel (first) axis at every remaining position,
    /// then applies a per-channel gain and bias.
    pub fn layer_norm(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let c = shape[0];
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(Error::dim(format!(
                "layer_norm gain {:?} / bias {:?} for {c} channels",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::Argument(format!("layer_norm eps must be >= 0, got {eps}")));
        }
        let (data, normalized, inv_std) =
            kernels::layer_norm_forward(self.data(input), self.data(gain), self.data(bias), c, eps);
        self.push(
            shape,
            data,
            Op::LayerNorm {
                input: input.0,
                gain: gain.0,
                bias: bias.0,
                normalized,
                inv_std,
            },
            &[input.0, gain.0, bias.0],
        )
    }

    /// Pairwise inner products between node vectors at each time step:
    /// `[C, N, T] x [C, N, T] -> [N, N, T]` with
    /// `out[i, j, t] = sum_c query[c, i, t] * key[c, j, t]`.
    pub fn node_scores(&mut self, query: Var, key: Var) -> Result<Var> {
        let (c, n, t) = rank3(self.shape(query), "node_scores query")?;
        if self.shape(key) != [c, n, t] {
            return Err(Error::dim(format!(
                "node_scores query {:?} vs key {:?}",
                self.shape(query),
                self.shape(key)
            )));
        }
        let data = kernels::node_scores_forward(self.data(query), self.data(key), c, n, t);
        self.push(
            vec![n, n, t],
            data,
            Op::NodeScores {
                query: query.0,
                key: key.0,
            },
            &[query.0, key.0],
        )
    }

    /// Mixes node vectors with per-time-step weights:
    /// `out[c, i, t] = sum_j weights[i, j, t] * values[c, j, t]`.
    pub fn node_mix(&mut self, weights: Var, values: Var) -> Result<Var> {
        let (c, n, t) = rank3(self.shape(values), "node_mix values")?;
        if self.shape(weights) != [n, n, t] {
            return Err(Error::dim(format!(
                "node_mix weights {:?} for values {:?}",
                self.shape(weights),
                self.shape(values)
            )));
        }
        let data = kernels::node_mix_forward(self.data(weights), self.data(values), c, n, t);
        self.push(
            vec![c, n, t],
            data,
            Op::NodeMix {
                weights: weights.0,
                values: values.0,
            },
            &[weights.0, values.0],
        )
    }

    /// Sign pattern (`input > 0`) of every ReLU input, in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            if let Op::Activation {
                kind: Activation::Relu,
                input,
            } = node.op
            {
                pattern.extend(self.nodes[input].value.data().iter().map(|&v| v > 0.0));
            }
        }
        pattern
    }

    // ---- differentiation ------------------------------------------------

    /// Fills gradients of `loss` with respect to every recorded value that
    /// requires one. Gradients from earlier calls are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let Tape {
            nodes,
            grads,
            fault,
        } = self;
        grads.clear();
        grads.resize(nodes.len(), None);
        if !nodes[loss.0].requires_grad {
            return Ok(());
        }
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            propagate(nodes, grads, i, &g, *fault);
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `var`.
    ///
    /// Returns `None` for values that do not require gradients and zeros for
    /// values the loss does not depend on.
    pub fn grad(&self, var: Var) -> Option<Tensor> {
        let node = &self.nodes[var.0];
        if !node.requires_grad {
            return None;
        }
        let data = match self.grads.get(var.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; node.value.len()],
        };
        Tensor::new(node.value.shape().to_vec(), data).ok()
    }

    /// Adds the gradient for `var` into `target`'s accumulated gradient.
    pub fn accumulate_into(&self, var: Var, target: &mut Tensor) -> Result<()> {
        match self.grads.get(var.0).and_then(|g| g.as_ref()) {
            Some(g) => target.accumulate_grad(g),
            None => target.accumulate_grad(&vec![0.0; target.len()]),
        }
    }
}

fn rank3(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::dim(format!("{what} must be rank 3, got {shape:?}"))),
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], idx: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[idx].requires_grad {
        return None;
    }
    let len = nodes[idx].value.len();
    Some(grads[idx].get_or_insert_with(|| vec![0.0; len]))
}

fn propagate(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    i: usize,
    g: &[f64],
    fault: Option<BackwardFault>,
) {
    let out = nodes[i].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Activation { kind, input } => {
            let x = nodes[*input].value.data();
            if let Some(gx) = slot(nodes, grads, *input) {
                match kind {
                    Activation::Tanh => {
                        let k = match fault {
                            Some(BackwardFault::TanhScale(k)) => k,
                            None => 1.0,
                        };
                        for ((gx, &y), &gy) in gx.iter_mut().zip(out).zip(g) {
                            *gx += k * gy * (1.0 - y * y);
                        }
                    }
                    Activation::Sigmoid => {
                        for ((gx, &y), &gy) in gx.iter_mut().zip(out).zip(g) {
                            *gx += gy * y * (1.0 - y);
                        }
                    }
                    Activation::Relu => {
                        for ((gx, &xv), &gy) in gx.iter_mut().zip(x).zip(g) {
                            if xv > 0.0 {
                                *gx += gy;
                            }
                        }
                    }
                }
            }
        }
        Op::Binary { kind, lhs, rhs } => {
            let (lhs, rhs) = (*lhs, *rhs);
            match kind {
                BinaryOp::Add | BinaryOp::Sub => {
                    if let Some(ga) = slot(nodes, grads, lhs) {
                        ga.iter_mut().zip(g).for_each(|(a, d)| *a += d);
                    }
                    let sign = if *kind == BinaryOp::Add { 1.0 } else { -1.0 };
                    if let Some(gb) = slot(nodes, grads, rhs) {
                        gb.iter_mut().zip(g).for_each(|(b, d)| *b += sign * d);
                    }
                }
                BinaryOp::Mul => {
                    let a = nodes[lhs].value.data();
                    let b = nodes[rhs].value.data();
                    if let Some(ga) = slot(nodes, grads, lhs) {
                        for ((ga, &bv), &d) in ga.iter_mut().zip(b).zip(g) {
                            *ga += d * bv;
                        }
                    }
                    if let Some(gb) = slot(nodes, grads, rhs) {
                        for ((gb, &av), &d) in gb.iter_mut().zip(a).zip(g) {
                            *gb += d * av;
                        }
                    }
                }
            }
        }
        Op::Scale { input, factor } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                gx.iter_mut().zip(g).for_each(|(x, d)| *x += factor * d);
            }
        }
        Op::Sum { input } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                gx.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::Reshape { input } => {
            if let Some(gx) = slot(nodes, grads, *input) {
                gx.iter_mut().zip(g).for_each(|(x, d)| *x += d);
            }
        }
        Op::Conv1d {
            input,
            weight,
            dilation,
        } => {
            let xs = nodes[*input].value.shape();
            let ws = nodes[*weight].value.shape();
            let geom = kernels::ConvGeom {
                cin: xs[0],
                cout: ws[0],
                nodes: xs[1],
                steps: xs[2],
                kernel: ws[2],
                dilation: *dilation,
            };
            let x = nodes[*input].value.data();
            let w = nodes[*weight].value.data();
            if let Some(gx) = slot(nodes, grads, *input) {
                kernels::conv1d_backward_input(g, w, gx, &geom);
            }
            if let Some(gw) = slot(nodes, grads, *weight) {
                kernels::conv1d_backward_weight(g, x, gw, &geom);
            }
        }
        Op::Conv1x1 { input, weight } => {
            let ws = nodes[*weight].value.shape();
            let (cout, cin) = (ws[0], ws[1]);
            let x = nodes[*input].value.data();
            let w = nodes[*weight].value.data();
            let positions = x.len() / cin;
            if let Some(gx) = slot(nodes, grads, *input) {
                kernels::matmul_tn_acc(w, g, gx, cout, cin, positions);
            }
            if let Some(gw) = slot(nodes, grads, *weight) {
                kernels::matmul_nt_acc(g, x, gw, cout, cin, positions);
            }
        }
        Op::AddChannelBias { input, bias } => {
            let c = nodes[*bias].value.len();
            let positions = g.len() / c;
            if let Some(gx) = slot(nodes, grads, *input) {
                gx.iter_mut().zip(g).for_each(|(x, d)| *x += d);
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                for (gb, row) in gb.iter_mut().zip(g.chunks(positions)) {
                    *gb += row.iter().sum::<f64>();
                }
            }
        }
        Op::ConcatChannels { lhs, rhs } => {
            let split = nodes[*lhs].value.len();
            if let Some(ga) = slot(nodes, grads, *lhs) {
                ga.iter_mut().zip(&g[..split]).for_each(|(a, d)| *a += d);
            }
            if let Some(gb) = slot(nodes, grads, *rhs) {
                gb.iter_mut().zip(&g[split..]).for_each(|(b, d)| *b += d);
            }
        }
        Op::SliceChannels { input, start } => {
            let per = g.len() / nodes[i].value.shape()[0];
            if let Some(gx) = slot(nodes, grads, *input) {
                gx[start * per..start * per + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(x, d)| *x += d);
            }
        }
        Op::SliceTime { input, start } => {
            let t = nodes[*input].value.shape()[2];
            let len = nodes[i].value.shape()[2];
            if let Some(gx) = slot(nodes, grads, *input) {
                for (row, grow) in gx.chunks_mut(t).zip(g.chunks(len)) {
                    row[*start..start + len]
                        .iter_mut()
                        .zip(grow)
                        .for_each(|(x, d)| *x += d);
                }
            }
        }
        Op::ExpandTime { input } => {
            let s = nodes[*input].value.shape();
            let (n, d) = (s[0], s[1]);
            let steps = nodes[i].value.shape()[2];
            if let Some(ge) = slot(nodes, grads, *input) {
                for dim in 0..d {
                    for node in 0..n {
                        let row = &g[(dim * n + node) * steps..][..steps];
                        ge[node * d + dim] += row.iter().sum::<f64>();
                    }
                }
            }
        }
        Op::Softmax { input, axis } => {
            let shape = nodes[i].value.shape();
            if let Some(gx) = slot(nodes, grads, *input) {
                kernels::softmax_backward(out, g, gx, shape, *axis);
            }
        }
        Op::LayerNorm {
            input,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let c = nodes[*gain].value.len();
            let gamma = nodes[*gain].value.data();
            if let Some(gx) = slot(nodes, grads, *input) {
                kernels::layer_norm_backward_input(g, gamma, normalized, inv_std, gx, c);
            }
            let positions = g.len() / c;
            if let Some(gg) = slot(nodes, grads, *gain) {
                for ch in 0..c {
                    let range = ch * positions..(ch + 1) * positions;
                    gg[ch] += g[range.clone()]
                        .iter()
                        .zip(&normalized[range])
                        .map(|(d, xh)| d * xh)
                        .sum::<f64>();
                }
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                for (gb, row) in gb.iter_mut().zip(g.chunks(positions)) {
                    *gb += row.iter().sum::<f64>();
                }
            }
        }
        Op::NodeScores { query, key } => {
            let s = nodes[*query].value.shape();
            let (c, n, t) = (s[0], s[1], s[2]);
            let q = nodes[*query].value.data();
            let k = nodes[*key].value.data();
            if let Some(gq) = slot(nodes, grads, *query) {
                kernels::node_scores_backward_query(g, k, gq, c, n, t);
            }
            if let Some(gk) = slot(nodes, grads, *key) {
                kernels::node_scores_backward_key(g, q, gk, c, n, t);
            }
        }
        Op::NodeMix { weights, values } => {
            let s = nodes[*values].value.shape();
            let (c, n, t) = (s[0], s[1], s[2]);
            let a = nodes[*weights].value.data();
            let h = nodes[*values].value.data();
            if let Some(ga) = slot(nodes, grads, *weights) {
                kernels::node_mix_backward_weights(g, h, ga, c, n, t);
            }
            if let Some(gh) = slot(nodes, grads, *values) {
                kernels::node_mix_backward_values(g, a, gh, c, n, t);
            }
        }
    }
}
