use std::ops::Range;

use super::dataset::{MaskMatrix, StDataset};
use super::normalize::Normalizer;
use crate::autodiff::Tensor;

/// One model input: the window around target step `t` and the targets at `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `[1, N, T_p + T_f + 1]` normalized values, zero wherever hidden.
    pub x_window: Tensor,
    /// Visibility with the same shape; the target column is all zeros.
    pub m_window: Tensor,
    pub target_index: usize,
    /// Normalized values at `t`; zero where the sensor never observed `t`.
    pub x_true_t: Vec<f64>,
    /// 1 where the entry at `t` is scored, 0 elsewhere.
    pub eval_mask_t: Vec<f64>,
}

impl WindowSample {
    pub fn target_count(&self) -> usize {
        self.eval_mask_t.iter().filter(|&&m| m != 0.0).count()
    }
}

/// Which time steps become samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetSelection {
    /// Steps with at least one artificially hidden entry; only those entries are scored.
    EvalMasked,
    /// Every step with anything hidden (natively or artificially), as needed to
    /// fill a matrix; hidden-but-observed entries are scored.
    AnyHidden,
    /// Every step with an observed entry. Since the whole target column is
    /// hidden from the input, every observed entry at the step is scored.
    AllObserved,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowReport {
    pub emitted: usize,
    /// Selected steps too close to either end of the series.
    pub skipped: usize,
}

/// Lazily builds samples for the selected target steps.
pub struct WindowStream<'a> {
    dataset: &'a StDataset,
    eval_mask: &'a MaskMatrix,
    visible: MaskMatrix,
    normalizer: &'a Normalizer,
    past: usize,
    future: usize,
    selection: TargetSelection,
    next: usize,
    end: usize,
    report: WindowReport,
}

/// Streams samples for targets in `targets` (clipped to the series).
///
/// Values are hidden wherever the entry is natively missing or in `eval_mask`;
/// the whole target column is hidden regardless.
pub fn make_windows<'a>(
    dataset: &'a StDataset,
    eval_mask: &'a MaskMatrix,
    normalizer: &'a Normalizer,
    past: usize,
    future: usize,
    targets: Range<usize>,
    selection: TargetSelection,
) -> WindowStream<'a> {
    WindowStream {
        dataset,
        eval_mask,
        visible: dataset.native_mask().and_not(eval_mask),
        normalizer,
        past,
        future,
        selection,
        next: targets.start,
        end: targets.end.min(dataset.n_steps()),
        report: WindowReport::default(),
    }
}

impl WindowStream<'_> {
    pub fn report(&self) -> WindowReport {
        self.report
    }

    /// Drains the stream, returning the samples and the final report.
    pub fn collect_with_report(mut self) -> (Vec<WindowSample>, WindowReport) {
        let samples: Vec<_> = self.by_ref().collect();
        (samples, self.report)
    }

    fn selected(&self, t: usize) -> bool {
        let n = self.dataset.n_nodes();
        match self.selection {
            TargetSelection::EvalMasked => (0..n).any(|i| self.eval_mask.get(t, i)),
            TargetSelection::AnyHidden => (0..n).any(|i| !self.visible.get(t, i)),
            TargetSelection::AllObserved => (0..n).any(|i| self.dataset.is_observed(t, i)),
        }
    }

    fn build(&self, t: usize) -> WindowSample {
        let ds = self.dataset;
        let n = ds.n_nodes();
        let len = self.past + self.future + 1;
        let mut x = vec![0.0; n * len];
        let mut m = vec![0.0; n * len];
        for node in 0..n {
            for k in 0..len {
                let s = t + k - self.past;
                if s != t && self.visible.get(s, node) {
                    x[node * len + k] = self.normalizer.normalize(node, ds.value(s, node));
                    m[node * len + k] = 1.0;
                }
            }
        }
        let mut x_true = vec![0.0; n];
        let mut eval = vec![0.0; n];
        for node in 0..n {
            if ds.is_observed(t, node) {
                x_true[node] = self.normalizer.normalize(node, ds.value(t, node));
                let scored = match self.selection {
                    TargetSelection::EvalMasked => self.eval_mask.get(t, node),
                    TargetSelection::AnyHidden => !self.visible.get(t, node),
                    TargetSelection::AllObserved => true,
                };
                if scored {
                    eval[node] = 1.0;
                }
            }
        }
        WindowSample {
            x_window: Tensor::new(vec![1, n, len], x).expect("window shape"),
            m_window: Tensor::new(vec![1, n, len], m).expect("window shape"),
            target_index: t,
            x_true_t: x_true,
            eval_mask_t: eval,
        }
    }
}

impl Iterator for WindowStream<'_> {
    type Item = WindowSample;

    fn next(&mut self) -> Option<WindowSample> {
        while self.next < self.end {
            let t = self.next;
            self.next += 1;
            if !self.selected(t) {
                continue;
            }
            if t < self.past || t + self.future >= self.dataset.n_steps() {
                self.report.skipped += 1;
                continue;
            }
            self.report.emitted += 1;
            return Some(self.build(t));
        }
        None
    }
}
