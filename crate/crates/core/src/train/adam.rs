use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let zeros: Vec<Vec<f64>> = params.into_iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            v: zeros.clone(),
            m: zeros,
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

/// Bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Vec<f64>], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::dim(format!(
                "parameter of {} entries with gradient of {} and moments of {}",
                p.len(),
                g.len(),
                m.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (i, theta) in p.data_mut().iter_mut().enumerate() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|v| *v *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let mut state = AdamState::new([&p]);
        let g = vec![vec![0.3, -4.0, 0.0]];
        adam_step(&mut [&mut p], &g, &mut state, 0.01).unwrap();
        // m_hat = g, v_hat = g^2 at t = 1
        let expect = [1.0 - 0.01 * 0.3 / (0.3 + EPSILON), -2.0 + 0.01 * 4.0 / (4.0 + EPSILON), 0.5];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut p = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[vec![1.0, 1.0]], &mut state, 0.1).unwrap();
        let before = p.clone();
        let m_before = state.m[0].clone();
        adam_step(&mut [&mut p], &[vec![0.0, 0.0]], &mut state, 0.0).unwrap();
        assert_eq!(p, before);
        assert!(state.m[0].iter().zip(&m_before).all(|(a, b)| a.abs() < b.abs()));
        assert!(state.v[0].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tensors_update_independently() {
        let mut a = Tensor::vector(vec![1.0]).unwrap();
        let mut b = Tensor::vector(vec![1.0]).unwrap();
        let mut state = AdamState::new([&a, &b]);
        adam_step(&mut [&mut a, &mut b], &[vec![1.0], vec![0.0]], &mut state, 0.1).unwrap();
        assert!(a.data()[0] < 1.0);
        assert_eq!(b.data()[0], 1.0);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let mut state = AdamState::new([&a]);
        assert!(adam_step(&mut [&mut a], &[vec![1.0]], &mut state, 0.1).is_err());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
        let mut small = vec![vec![0.1]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.1);
    }
}
