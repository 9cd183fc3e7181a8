use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{self, tag};
use crate::stats::{self, student_t_sf_unchecked};

/// Per-stage hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTest {
    /// Pooled-variance two-sample t with `2 n - 2` degrees of freedom.
    Pooled,
    /// Welch's unequal-variance t with Satterthwaite degrees of freedom.
    Welch,
}

/// Two-stage design with sample-size adaptation after stage 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    /// Per-group stage-1 size.
    pub n1: u32,
    /// Stage 2 is halved when the stage-1 mean difference reaches `delta`.
    pub delta: f64,
    pub sigma_t: f64,
    pub sigma_p: f64,
    pub alpha: f64,
    pub mu0: f64,
    pub mc_reps: u32,
    pub test: StageTest,
}

impl TrialDesign {
    pub fn new(n1: u32, mu0: f64, alpha: f64) -> Self {
        TrialDesign {
            n1,
            delta: 0.3,
            sigma_t: 1.0,
            sigma_p: 1.0,
            alpha,
            mu0,
            mc_reps: 10_000,
            test: StageTest::Pooled,
        }
    }

    /// Stage-2 per-group size: `round_half_up(n1 / 2)` after a promising
    /// stage 1, `2 n1` otherwise; never below 2.
    pub fn stage2_size(&self, delta1: f64) -> u32 {
        let n2 = if delta1 >= self.delta { self.n1.div_ceil(2) } else { 2 * self.n1 };
        n2.max(2)
    }
}

/// Group mean and within-group sum of squares for `n` normal draws, drawn
/// from their exact joint law.
fn group_summary(rng: &mut impl Rng, n: u32, mu: f64, sigma: f64, chi: &ChiSquared<f64>) -> (f64, f64) {
    let z: f64 = StandardNormal.sample(rng);
    let mean = mu + sigma * z / (n as f64).sqrt();
    let ss = sigma * sigma * chi.sample(rng);
    (mean, ss)
}

/// One-sided p-value of one stage from group summaries.
fn stage_p(test: StageTest, n: u32, (mt, sst): (f64, f64), (mp, ssp): (f64, f64)) -> f64 {
    let nf = n as f64;
    let (t, df) = match test {
        StageTest::Pooled => {
            let df = 2.0 * nf - 2.0;
            let sp2 = (sst + ssp) / df;
            ((mt - mp) / (sp2 * 2.0 / nf).sqrt(), df)
        }
        StageTest::Welch => {
            let (vt, vp) = (sst / (nf - 1.0) / nf, ssp / (nf - 1.0) / nf);
            let df = (vt + vp).powi(2) / (vt * vt / (nf - 1.0) + vp * vp / (nf - 1.0));
            ((mt - mp) / (vt + vp).sqrt(), df)
        }
    };
    student_t_sf_unchecked(t, df)
}

fn inverse_normal_score(p: f64) -> f64 {
    // keep both tails finite so a single extreme stage cannot yield inf - inf
    let p = p.clamp(1e-300, 1.0 - 1e-16);
    stats::upper_quantile(p)
}

/// Monte Carlo rejection rate of the adaptive two-stage design under the
/// inverse-normal combination test with equal weights.
pub fn trial_power(design: &TrialDesign, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, &[]);
    let z_crit = stats::upper_quantile(design.alpha);
    let n1 = design.n1;
    let chi1 = ChiSquared::new((n1 - 1) as f64).expect("n1 >= 2");
    let mut cache: Vec<Option<ChiSquared<f64>>> = Vec::new();
    let mut rejections = 0u32;
    for _ in 0..design.mc_reps {
        let t1 = group_summary(&mut rng, n1, design.mu0, design.sigma_t, &chi1);
        let p1 = group_summary(&mut rng, n1, 0.0, design.sigma_p, &chi1);
        let n2 = design.stage2_size(t1.0 - p1.0);
        let idx = n2 as usize;
        if cache.len() <= idx {
            cache.resize(idx + 1, None);
        }
        let chi2 = *cache[idx].get_or_insert_with(|| ChiSquared::new((n2 - 1) as f64).expect("n2 >= 2"));
        let t2 = group_summary(&mut rng, n2, design.mu0, design.sigma_t, &chi2);
        let p2 = group_summary(&mut rng, n2, 0.0, design.sigma_p, &chi2);
        let pv1 = stage_p(design.test, n1, t1, p1);
        let pv2 = stage_p(design.test, n2, t2, p2);
        let z = (inverse_normal_score(pv1) + inverse_normal_score(pv2)) / std::f64::consts::SQRT_2;
        if z >= z_crit {
            rejections += 1;
        }
    }
    rejections as f64 / design.mc_reps as f64
}

/// Sampling ranges for the trial dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialRanges {
    pub mu0: (f64, f64),
    pub alpha: (f64, f64),
    pub n1: (u32, u32),
    pub delta: f64,
    pub sigma: f64,
    pub mc_reps: u32,
    pub test: StageTest,
}

impl Default for TrialRanges {
    fn default() -> Self {
        TrialRanges {
            mu0: (0.1, 0.6),
            alpha: (0.01, 0.15),
            n1: (10, 60),
            delta: 0.3,
            sigma: 1.0,
            mc_reps: 10_000,
            test: StageTest::Pooled,
        }
    }
}

/// Rows `(mu0, alpha, beta)` with target `n1 / n1_max`, where
/// `beta = 1 - power`. Simulated `beta` is kept inside
/// `[0.5 / reps, 1 - 0.5 / reps]` so that `Z_{1-beta}` stays finite.
pub fn gen_trial_dataset(n_rows: usize, ranges: &TrialRanges, seed: u64) -> Dataset {
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_rows)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::DATA, i as u64, 0]);
            let mu0 = r.random_range(ranges.mu0.0..ranges.mu0.1);
            let alpha = r.random_range(ranges.alpha.0..ranges.alpha.1);
            let n1 = r.random_range(ranges.n1.0..=ranges.n1.1);
            let design = TrialDesign {
                n1,
                delta: ranges.delta,
                sigma_t: ranges.sigma,
                sigma_p: ranges.sigma,
                alpha,
                mu0,
                mc_reps: ranges.mc_reps,
                test: ranges.test,
            };
            let power = trial_power(&design, rng::derive_seed(seed, &[tag::DATA, i as u64, 1]));
            let floor = 0.5 / ranges.mc_reps as f64;
            let beta = (1.0 - power).clamp(floor, 1.0 - floor);
            (vec![mu0, alpha, beta], vec![n1 as f64 / ranges.n1.1 as f64])
        })
        .collect();
    Dataset::from_rows(
        vec!["mu0".into(), "alpha".into(), "beta".into()],
        vec!["y".into()],
        &rows,
    )
    .expect("fixed-width rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage2_rule() {
        let d = TrialDesign::new(41, 0.3, 0.05);
        assert_eq!(d.stage2_size(0.3), 21);
        assert_eq!(d.stage2_size(0.29), 82);
        assert_eq!(TrialDesign::new(2, 0.3, 0.05).stage2_size(1.0), 2);
    }

    #[test]
    fn large_effect_has_full_power() {
        let mut d = TrialDesign::new(40, 1.5, 0.05);
        d.mc_reps = 2000;
        assert!(trial_power(&d, 1) > 0.999);
    }

    #[test]
    fn dataset_targets_on_grid() {
        let ranges = TrialRanges { mc_reps: 200, ..TrialRanges::default() };
        let ds = gen_trial_dataset(30, &ranges, 4);
        for i in 0..ds.len() {
            let k = ds.y(i)[0] * 60.0;
            assert!((k - k.round()).abs() < 1e-9 && (10.0..=60.0).contains(&k.round()));
            assert!((0.0..=1.0).contains(&ds.x(i)[2]));
        }
        assert_eq!(ds, gen_trial_dataset(30, &ranges, 4));
    }
}
