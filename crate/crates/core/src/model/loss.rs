use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Sum of squared errors over entries with `eval_mask == 1`, and their count.
pub fn masked_sse(tape: &mut Tape, prediction: Var, x_true: &[f64], eval_mask: &[f64]) -> Result<(Var, usize)> {
    let n = tape.value(prediction).len();
    if x_true.len() != n || eval_mask.len() != n {
        return Err(Error::dim(format!(
            "prediction has {n} entries, target {} and mask {}",
            x_true.len(),
            eval_mask.len()
        )));
    }
    let shape = tape.shape(prediction).to_vec();
    // masked-out targets are zeroed so their (possibly NaN) values never enter the graph
    let target: Vec<f64> = x_true
        .iter()
        .zip(eval_mask)
        .map(|(&y, &m)| if m != 0.0 { y } else { 0.0 })
        .collect();
    let count = eval_mask.iter().filter(|&&m| m != 0.0).count();
    let target = tape.constant(Tensor::new(shape.clone(), target)?);
    let mask = tape.constant(Tensor::new(shape, eval_mask.to_vec())?);
    let diff = tape.sub(prediction, target)?;
    let diff = tape.mul(diff, mask)?;
    let sq = tape.mul(diff, diff)?;
    Ok((tape.sum(sq)?, count))
}

/// Mean squared error over masked entries; `None` when nothing is masked.
pub fn masked_mse_loss(tape: &mut Tape, prediction: Var, x_true: &[f64], eval_mask: &[f64]) -> Result<Option<Var>> {
    let (sse, count) = masked_sse(tape, prediction, x_true, eval_mask)?;
    if count == 0 {
        return Ok(None);
    }
    tape.scale(sse, 1.0 / count as f64).map(Some)
}

/// Value-only masked MSE; zero when nothing is masked.
pub fn masked_mse(x_hat: &[f64], x_true: &[f64], eval_mask: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ((&p, &y), &m) in x_hat.iter().zip(x_true).zip(eval_mask) {
        if m != 0.0 {
            total += (y - p) * (y - p);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_of(x_hat: &[f64], x_true: &[f64], mask: &[f64]) -> Option<f64> {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(x_hat.to_vec()).unwrap().with_grad());
        masked_mse_loss(&mut tape, p, x_true, mask)
            .unwrap()
            .map(|l| tape.value(l).data()[0])
    }

    #[test]
    fn perfect_fit_is_zero() {
        assert_eq!(loss_of(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 1.0]), Some(0.0));
    }

    #[test]
    fn single_masked_entry() {
        assert_eq!(loss_of(&[1.0, 4.0], &[1.0, 2.0], &[0.0, 1.0]), Some(4.0));
        assert_eq!(masked_mse(&[1.0, 4.0], &[1.0, 2.0], &[0.0, 1.0]), 4.0);
    }

    #[test]
    fn unmasked_targets_are_ignored() {
        let a = loss_of(&[1.0, 4.0], &[1.0, 2.0], &[0.0, 1.0]);
        let b = loss_of(&[1.0, 4.0], &[-77.0, 2.0], &[0.0, 1.0]);
        let c = loss_of(&[1.0, 4.0], &[f64::NAN, 2.0], &[0.0, 1.0]);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn empty_mask_skips_sample() {
        assert_eq!(loss_of(&[1.0], &[3.0], &[0.0]), None);
        assert_eq!(masked_mse(&[1.0], &[3.0], &[0.0]), 0.0);
    }

    #[test]
    fn gradient_is_scaled_residual() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(vec![1.0, 4.0, 0.0]).unwrap().with_grad());
        let l = masked_mse_loss(&mut tape, p, &[1.0, 2.0, 5.0], &[0.0, 1.0, 1.0])
            .unwrap()
            .unwrap();
        tape.backward(l).unwrap();
        // d/dp mean((p - y)^2) over 2 entries = (p - y)
        assert_eq!(tape.grad(p).unwrap().data(), &[0.0, 2.0, -5.0]);
    }
}
