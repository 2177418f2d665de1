use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Contiguous train / validation / test ranges along time (70 / 10 / 20).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl TimeSplit {
    pub fn new(n_steps: usize) -> Self {
        let a = n_steps * 7 / 10;
        let b = n_steps * 8 / 10;
        TimeSplit {
            train: 0..a,
            val: a..b,
            test: b..n_steps,
        }
    }
}
