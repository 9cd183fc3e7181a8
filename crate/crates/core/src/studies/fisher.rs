use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{self, tag};
use crate::stats::fisher_exact_greater;

/// Two equal-size binary-outcome groups. Each row draws the group size
/// uniformly from `n`, then responder counts uniformly on `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherDesign {
    /// Per-group size range (inclusive); equal bounds fix `n`.
    pub n: (u64, u64),
    pub alpha_level: f64,
}

impl Default for FisherDesign {
    fn default() -> Self {
        FisherDesign { n: (10, 50), alpha_level: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherSampling {
    Random { rows: usize },
    /// Every `(q1, q2, n)` in the design's range.
    Exhaustive,
}

/// `(0, 1)` when the one-sided p-value is below `alpha`, else `(1, 0)`.
pub fn fisher_label(q1: u64, q2: u64, n: u64, alpha: f64) -> [f64; 2] {
    let p = fisher_exact_greater(q1, q2, n).expect("counts within group size");
    if p < alpha {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

pub fn fisher_dataset(sampling: FisherSampling, design: &FisherDesign, seed: u64) -> Dataset {
    let mut ds = Dataset::new(
        vec!["q1".into(), "q2".into(), "n".into()],
        vec!["y0".into(), "y1".into()],
    );
    let mut push = |q1: u64, q2: u64, n: u64| {
        let y = fisher_label(q1, q2, n, design.alpha_level);
        ds.push(&[q1 as f64, q2 as f64, n as f64], &y).expect("fixed-width rows");
    };
    match sampling {
        FisherSampling::Random { rows } => {
            let mut r = rng::stream(seed, &[tag::DATA]);
            for _ in 0..rows {
                let n = r.random_range(design.n.0..=design.n.1);
                let q1 = r.random_range(0..=n);
                let q2 = r.random_range(0..=n);
                push(q1, q2, n);
            }
        }
        FisherSampling::Exhaustive => {
            for n in design.n.0..=design.n.1 {
                for q1 in 0..=n {
                    for q2 in 0..=n {
                        push(q1, q2, n);
                    }
                }
            }
        }
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_counts_never_significant() {
        for n in 1..30 {
            for q in 0..=n {
                assert_eq!(fisher_label(q, q, n, 0.05), [1.0, 0.0]);
            }
        }
        assert_eq!(fisher_label(0, 10, 10, 0.05), [0.0, 1.0]);
    }

    #[test]
    fn exhaustive_size() {
        let d = FisherDesign { n: (3, 4), alpha_level: 0.05 };
        let ds = fisher_dataset(FisherSampling::Exhaustive, &d, 0);
        assert_eq!(ds.len(), 16 + 25);
    }
}
