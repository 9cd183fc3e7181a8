use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{self, tag};
use crate::stats::{beta_tail, binom_pmf};

/// Single-arm binary-endpoint Go/No-Go rule with a Beta prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GngDesign {
    pub n: u64,
    pub q_a: f64,
    pub q_b: f64,
    pub t_min: f64,
    pub t_base: f64,
    pub tau_min: f64,
    pub tau_base: f64,
    pub q0: f64,
}

impl GngDesign {
    pub fn new(t_min: f64, t_base: f64, q0: f64) -> Self {
        GngDesign { n: 40, q_a: 1.0, q_b: 1.0, t_min, t_base, tau_min: 0.8, tau_base: 0.1, q0 }
    }

    /// Posterior `P(q >= t)` after `successes` out of `n`; real-valued
    /// success counts are admitted.
    pub fn posterior_tail(&self, t: f64, successes: f64) -> f64 {
        beta_tail(t, self.q_a + successes, self.q_b + self.n as f64 - successes)
            .expect("positive posterior parameters")
    }
}

/// Go decision after observing `n_r` responders.
pub fn gng_go(d: &GngDesign, n_r: u64) -> bool {
    let s = n_r as f64;
    d.posterior_tail(d.t_min, s) > d.tau_min && d.posterior_tail(d.t_base, s) > d.tau_base
}

/// Exact probability of a Go decision when the true response rate is `q0`.
pub fn gng_expected_go(d: &GngDesign) -> f64 {
    (0..=d.n)
        .filter(|&k| gng_go(d, k))
        .map(|k| binom_pmf(k, d.n, d.q0).expect("k <= n"))
        .sum::<f64>()
        .min(1.0)
}

/// Which covariates describe a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `(tmin, tbase, q0)`.
    Original,
    /// Posterior tail probabilities of both thresholds at the pseudo-count
    /// `n * q0`, plus `q0`.
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GngRanges {
    pub t_min: (f64, f64),
    pub t_base_gap: (f64, f64),
    pub q0: (f64, f64),
    pub n: u64,
    pub q_a: f64,
    pub q_b: f64,
    pub tau_min: f64,
    pub tau_base: f64,
}

impl Default for GngRanges {
    fn default() -> Self {
        GngRanges {
            t_min: (0.1, 0.3),
            t_base_gap: (0.05, 0.2),
            q0: (0.1, 0.6),
            n: 40,
            q_a: 1.0,
            q_b: 1.0,
            tau_min: 0.8,
            tau_base: 0.1,
        }
    }
}

/// Random designs with their exact expected-Go value as target. The designs
/// depend only on `seed`, so both input modes share targets.
pub fn gng_dataset(n_rows: usize, ranges: &GngRanges, mode: InputMode, seed: u64) -> Dataset {
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_rows)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::DATA, i as u64]);
            let t_min = r.random_range(ranges.t_min.0..ranges.t_min.1);
            let t_base = t_min + r.random_range(ranges.t_base_gap.0..ranges.t_base_gap.1);
            let q0 = r.random_range(ranges.q0.0..ranges.q0.1);
            let d = GngDesign {
                n: ranges.n,
                q_a: ranges.q_a,
                q_b: ranges.q_b,
                t_min,
                t_base,
                tau_min: ranges.tau_min,
                tau_base: ranges.tau_base,
                q0,
            };
            let y = gng_expected_go(&d);
            let x = match mode {
                InputMode::Original => vec![t_min, t_base, q0],
                InputMode::Intermediate => {
                    let s = d.n as f64 * q0;
                    vec![d.posterior_tail(t_min, s), d.posterior_tail(t_base, s), q0]
                }
            };
            (x, vec![y])
        })
        .collect();
    let names: [&str; 3] = match mode {
        InputMode::Original => ["tmin", "tbase", "q0"],
        InputMode::Intermediate => ["post_min", "post_base", "q0"],
    };
    Dataset::from_rows(names.iter().map(|s| s.to_string()).collect(), vec!["y".into()], &rows)
        .expect("fixed-width rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_thresholds_always_go() {
        let d = GngDesign::new(0.0, 0.0, 0.3);
        assert!((gng_expected_go(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_is_indicator_at_zero() {
        let d = GngDesign::new(0.2, 0.3, 0.0);
        assert_eq!(gng_expected_go(&d), if gng_go(&d, 0) { 1.0 } else { 0.0 });
    }

    #[test]
    fn modes_share_targets() {
        let r = GngRanges::default();
        let a = gng_dataset(40, &r, InputMode::Original, 5);
        let b = gng_dataset(40, &r, InputMode::Intermediate, 5);
        assert_eq!(a.targets(), b.targets());
        assert_ne!(a.features(), b.features());
        for i in 0..b.len() {
            assert!(b.x(i)[..2].iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
