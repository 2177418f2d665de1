//! Raw slice kernels behind the tape operations. All layouts are row-major.

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub nodes: usize,
    pub steps: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub fn out_steps(&self) -> usize {
        self.steps - (self.kernel - 1) * self.dilation
    }
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let tout = g.out_steps();
    let mut y = vec![0.0; g.cout * g.nodes * tout];
    for o in 0..g.cout {
        for c in 0..g.cin {
            for j in 0..g.kernel {
                let wv = w[(o * g.cin + c) * g.kernel + j];
                let shift = j * g.dilation;
                for n in 0..g.nodes {
                    let src = &x[(c * g.nodes + n) * g.steps + shift..][..tout];
                    let dst = &mut y[(o * g.nodes + n) * tout..][..tout];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv1d_backward_input(gy: &[f64], w: &[f64], gx: &mut [f64], g: &ConvGeom) {
    let tout = g.out_steps();
    for o in 0..g.cout {
        for c in 0..g.cin {
            for j in 0..g.kernel {
                let wv = w[(o * g.cin + c) * g.kernel + j];
                let shift = j * g.dilation;
                for n in 0..g.nodes {
                    let src = &gy[(o * g.nodes + n) * tout..][..tout];
                    let dst = &mut gx[(c * g.nodes + n) * g.steps + shift..][..tout];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += wv * s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward_weight(gy: &[f64], x: &[f64], gw: &mut [f64], g: &ConvGeom) {
    let tout = g.out_steps();
    for o in 0..g.cout {
        for c in 0..g.cin {
            for j in 0..g.kernel {
                let shift = j * g.dilation;
                let mut acc = 0.0;
                for n in 0..g.nodes {
                    let dy = &gy[(o * g.nodes + n) * tout..][..tout];
                    let xs = &x[(c * g.nodes + n) * g.steps + shift..][..tout];
                    acc += dot(dy, xs);
                }
                gw[(o * g.cin + c) * g.kernel + j] += acc;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W[m x k] * X[k x p]`.
pub(crate) fn matmul(w: &[f64], x: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut y = vec![0.0; m * p];
    for (o, yrow) in y.chunks_mut(p).enumerate() {
        for (c, xrow) in x.chunks(p).enumerate().take(k) {
            let wv = w[o * k + c];
            for (d, s) in yrow.iter_mut().zip(xrow) {
                *d += wv * s;
            }
        }
    }
    y
}

/// `gx += W^T * gy` for `W[m x k]`, `gy[m x p]`.
pub(crate) fn matmul_tn_acc(w: &[f64], gy: &[f64], gx: &mut [f64], m: usize, k: usize, p: usize) {
    for (o, grow) in gy.chunks(p).enumerate().take(m) {
        for (c, xrow) in gx.chunks_mut(p).enumerate() {
            let wv = w[o * k + c];
            for (d, s) in xrow.iter_mut().zip(grow) {
                *d += wv * s;
            }
        }
    }
}

/// `gw += gy * X^T` for `gy[m x p]`, `X[k x p]`.
pub(crate) fn matmul_nt_acc(gy: &[f64], x: &[f64], gw: &mut [f64], m: usize, k: usize, p: usize) {
    for (o, grow) in gy.chunks(p).enumerate().take(m) {
        for (c, xrow) in x.chunks(p).enumerate().take(k) {
            gw[o * k + c] += dot(grow, xrow);
        }
    }
}

fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

pub(crate) fn softmax_forward(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_strides(shape, axis);
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * len + a) * inner + i;
            let max = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for a in 0..len {
                let e = (x[at(a)] - max).exp();
                y[at(a)] = e;
                total += e;
            }
            for a in 0..len {
                y[at(a)] /= total;
            }
        }
    }
    y
}

pub(crate) fn softmax_backward(y: &[f64], gy: &[f64], gx: &mut [f64], shape: &[usize], axis: usize) {
    let (outer, len, inner) = axis_strides(shape, axis);
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| (o * len + a) * inner + i;
            let inner_prod: f64 = (0..len).map(|a| gy[at(a)] * y[at(a)]).sum();
            for a in 0..len {
                gx[at(a)] += y[at(a)] * (gy[at(a)] - inner_prod);
            }
        }
    }
}

/// Returns `(output, normalized, inv_std)`; `normalized` is channel-major like
/// the input and `inv_std` holds one entry per position.
pub(crate) fn layer_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    channels: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let positions = x.len() / channels;
    let mut mean = vec![0.0; positions];
    for row in x.chunks(positions) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= channels as f64);
    let mut var = vec![0.0; positions];
    for row in x.chunks(positions) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .map(|s| 1.0 / (s / channels as f64 + eps).sqrt())
        .collect();
    let mut normalized = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for c in 0..channels {
        let range = c * positions..(c + 1) * positions;
        for p in 0..positions {
            let xh = (x[range.start + p] - mean[p]) * inv_std[p];
            normalized[range.start + p] = xh;
            y[range.start + p] = xh * gain[c] + bias[c];
        }
    }
    (y, normalized, inv_std)
}

pub(crate) fn layer_norm_backward_input(
    gy: &[f64],
    gain: &[f64],
    normalized: &[f64],
    inv_std: &[f64],
    gx: &mut [f64],
    channels: usize,
) {
    let positions = gy.len() / channels;
    let mut sum_d = vec![0.0; positions];
    let mut sum_dx = vec![0.0; positions];
    for c in 0..channels {
        for p in 0..positions {
            let k = c * positions + p;
            let d = gy[k] * gain[c];
            sum_d[p] += d;
            sum_dx[p] += d * normalized[k];
        }
    }
    let cf = channels as f64;
    for c in 0..channels {
        for p in 0..positions {
            let k = c * positions + p;
            let d = gy[k] * gain[c];
            gx[k] += inv_std[p] / cf * (cf * d - sum_d[p] - normalized[k] * sum_dx[p]);
        }
    }
}

pub(crate) fn node_scores_forward(q: &[f64], k: &[f64], c: usize, n: usize, t: usize) -> Vec<f64> {
    let mut s = vec![0.0; n * n * t];
    for ch in 0..c {
        for i in 0..n {
            let qi = &q[(ch * n + i) * t..][..t];
            for j in 0..n {
                let kj = &k[(ch * n + j) * t..][..t];
                let dst = &mut s[(i * n + j) * t..][..t];
                for ((d, a), b) in dst.iter_mut().zip(qi).zip(kj) {
                    *d += a * b;
                }
            }
        }
    }
    s
}

pub(crate) fn node_scores_backward_query(gs: &[f64], k: &[f64], gq: &mut [f64], c: usize, n: usize, t: usize) {
    for ch in 0..c {
        for i in 0..n {
            for j in 0..n {
                let kj = &k[(ch * n + j) * t..][..t];
                let g = &gs[(i * n + j) * t..][..t];
                let dst = &mut gq[(ch * n + i) * t..][..t];
                for ((d, a), b) in dst.iter_mut().zip(g).zip(kj) {
                    *d += a * b;
                }
            }
        }
    }
}

pub(crate) fn node_scores_backward_key(gs: &[f64], q: &[f64], gk: &mut [f64], c: usize, n: usize, t: usize) {
    for ch in 0..c {
        for i in 0..n {
            let qi = &q[(ch * n + i) * t..][..t];
            for j in 0..n {
                let g = &gs[(i * n + j) * t..][..t];
                let dst = &mut gk[(ch * n + j) * t..][..t];
                for ((d, a), b) in dst.iter_mut().zip(g).zip(qi) {
                    *d += a * b;
                }
            }
        }
    }
}

pub(crate) fn node_mix_forward(a: &[f64], h: &[f64], c: usize, n: usize, t: usize) -> Vec<f64> {
    let mut y = vec![0.0; c * n * t];
    for ch in 0..c {
        for i in 0..n {
            let dst = &mut y[(ch * n + i) * t..][..t];
            for j in 0..n {
                let w = &a[(i * n + j) * t..][..t];
                let hj = &h[(ch * n + j) * t..][..t];
                for ((d, wv), hv) in dst.iter_mut().zip(w).zip(hj) {
                    *d += wv * hv;
                }
            }
        }
    }
    y
}

pub(crate) fn node_mix_backward_weights(gy: &[f64], h: &[f64], ga: &mut [f64], c: usize, n: usize, t: usize) {
    for ch in 0..c {
        for i in 0..n {
            let g = &gy[(ch * n + i) * t..][..t];
            for j in 0..n {
                let hj = &h[(ch * n + j) * t..][..t];
                let dst = &mut ga[(i * n + j) * t..][..t];
                for ((d, a), b) in dst.iter_mut().zip(g).zip(hj) {
                    *d += a * b;
                }
            }
        }
    }
}

pub(crate) fn node_mix_backward_values(gy: &[f64], a: &[f64], gh: &mut [f64], c: usize, n: usize, t: usize) {
    for ch in 0..c {
        for i in 0..n {
            let g = &gy[(ch * n + i) * t..][..t];
            for j in 0..n {
                let w = &a[(i * n + j) * t..][..t];
                let dst = &mut gh[(ch * n + j) * t..][..t];
                for ((d, wv), gv) in dst.iter_mut().zip(w).zip(g) {
                    *d += wv * gv;
                }
            }
        }
    }
}
