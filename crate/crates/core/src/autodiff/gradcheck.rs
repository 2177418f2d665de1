//! Central finite-difference verification of tape gradients.

use super::tape::{BackwardFault, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct InputReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU kink.
    pub excluded: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
    pub step: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn excluded(&self) -> usize {
        self.inputs.iter().map(|r| r.excluded.len()).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Checks the gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let inputs = [("x".to_string(), x.detached())];
    grad_check_many(|tape, vars| f(tape, vars[0]), &inputs, step, tol, None)
}

/// Checks gradients of a scalar function with respect to every entry of every
/// named input.
///
/// An entry is excluded when the ReLU activation pattern at `x - h` or
/// `x + h` differs from the one at `x`, since the function is not
/// differentiable along that segment.
pub fn grad_check_many<F>(
    f: F,
    inputs: &[(String, Tensor)],
    step: f64,
    tol: f64,
    fault: Option<BackwardFault>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {step}")));
    }
    let mut tape = Tape::new();
    if let Some(fault) = fault {
        tape.inject_fault(fault);
    }
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(_, t)| tape.leaf(t.detached().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let base_pattern = tape.relu_pattern();
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("leaf requires grad"))
        .collect();
    drop(tape);

    let mut current: Vec<Tensor> = inputs.iter().map(|(_, t)| t.detached()).collect();
    let eval = |values: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).data()[0], tape.relu_pattern()))
    };

    let mut reports = Vec::with_capacity(inputs.len());
    for (which, (name, _)) in inputs.iter().enumerate() {
        let mut report = InputReport {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: None,
            checked: 0,
            excluded: Vec::new(),
        };
        for idx in 0..current[which].len() {
            let orig = current[which].data()[idx];
            current[which].data_mut()[idx] = orig + step;
            let (plus, pattern_plus) = eval(&current)?;
            current[which].data_mut()[idx] = orig - step;
            let (minus, pattern_minus) = eval(&current)?;
            current[which].data_mut()[idx] = orig;
            if pattern_plus != base_pattern || pattern_minus != base_pattern {
                report.excluded.push(idx);
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[which].data()[idx], numeric);
            report.checked += 1;
            if report.worst_index.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = Some(idx);
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        inputs: reports,
        tolerance: tol,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_matches_exactly() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.0]).unwrap();
        let report = grad_check(|tape, x| tape.sum(x), &x, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
        assert!(report.passed());
        assert!(report.max_rel_error() < 1e-9, "{}", report.max_rel_error());
        assert_eq!(report.excluded(), 0);
    }

    #[test]
    fn relu_kink_at_zero_is_excluded() {
        let x = Tensor::vector(vec![0.0, 1.5, -2.0]).unwrap();
        let report = grad_check(
            |tape, x| {
                let r = tape.relu(x)?;
                tape.sum(r)
            },
            &x,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert_eq!(report.inputs[0].excluded, vec![0]);
        assert_eq!(report.inputs[0].checked, 2);
        assert!(report.passed());
    }

    #[test]
    fn corrupted_backward_rule_fails() {
        let inputs = [("x".to_string(), Tensor::vector(vec![0.2, -0.7]).unwrap())];
        let f = |tape: &mut Tape, v: &[Var]| {
            let y = tape.tanh(v[0])?;
            tape.sum(y)
        };
        let clean = grad_check_many(f, &inputs, DEFAULT_STEP, DEFAULT_TOLERANCE, None).unwrap();
        assert!(clean.passed());
        let broken = grad_check_many(
            f,
            &inputs,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
            Some(BackwardFault::TanhScale(1.01)),
        )
        .unwrap();
        assert!(!broken.passed());
    }

    #[test]
    fn rejects_nonpositive_step() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(|tape, x| tape.sum(x), &x, 0.0, 1e-4).is_err());
    }
}
