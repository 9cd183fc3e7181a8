//! Oracle checks behind `interpfn verify`. Every check compares the library
//! against an independent computation: exact integer enumeration, plain
//! Monte Carlo, or central finite differences.

use interpfn_core::data::Dataset;
use interpfn_core::expr::{enumerate_candidates, BaseFunctionLibrary, CandidateModel, ComplexityKind, OutputLink, PairingMode};
use interpfn_core::mlp::{self, MlpSpec, MlpState, OutputActivation};
use interpfn_core::rng;
use interpfn_core::select::{mallows_cp, mc_statistic};
use interpfn_core::stats::{self, fisher_exact_greater};
use interpfn_core::studies::{fisher_label, gng_expected_go, gng_go, GngDesign};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

/// `N * MC(lambda = 2 / N, r = p)` against `C_p` with `sigma2 = mse_full`.
pub fn cp_mc_identity(tuples: usize, seed: u64) -> CheckOutcome {
    let mut r = rng::stream(seed, &[1]);
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let n = r.random_range(10..5000usize);
        let p = r.random_range(0..60usize);
        let mse_full = r.random_range(1e-4..1.0);
        let mse_k = r.random_range(1e-4..1.0);
        let cp = mallows_cp(mse_k * n as f64, mse_full, n, p);
        let mc = mc_statistic(mse_k, mse_full, 2.0 / n as f64, p as f64);
        let err = (n as f64 * mc - cp).abs() / cp.abs().max(1.0);
        worst = worst.max(err);
    }
    CheckOutcome::new("cp_mc_identity", worst <= 1e-10, format!("{tuples} tuples, worst relative error {worst:.2e}"))
}

fn choose_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `P(X >= q2)` for the hypergeometric count of group-2 successes, summed in
/// exact integers and divided once.
pub fn fisher_oracle(q1: u64, q2: u64, n: u64) -> f64 {
    let m = q1 + q2;
    let total = choose_u128(2 * n, m);
    let tail: u128 = (q2..=m.min(n)).map(|k| choose_u128(n, k) * choose_u128(n, m - k)).sum();
    tail as f64 / total as f64
}

pub fn fisher_enumeration(max_n: u64) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut label_mismatch = 0usize;
    let mut cases = 0usize;
    for n in 1..=max_n {
        for q1 in 0..=n {
            for q2 in 0..=n {
                cases += 1;
                let lib = fisher_exact_greater(q1, q2, n).unwrap_or(f64::NAN);
                let exact = fisher_oracle(q1, q2, n);
                let rel = (lib - exact).abs() / exact;
                worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
                let want = if exact < 0.05 { [0.0, 1.0] } else { [1.0, 0.0] };
                if fisher_label(q1, q2, n, 0.05) != want {
                    label_mismatch += 1;
                }
            }
        }
    }
    CheckOutcome::new(
        "fisher_enumeration",
        worst <= 1e-12 && label_mismatch == 0,
        format!("{cases} tables with n <= {max_n}, worst relative error {worst:.2e}, {label_mismatch} label mismatches"),
    )
}

fn random_design(r: &mut impl Rng) -> GngDesign {
    let t_min = r.random_range(0.05..0.4);
    let t_base = t_min + r.random_range(0.0..0.25);
    GngDesign::new(t_min, t_base, r.random_range(0.05..0.7))
}

/// Exact expected Go against direct simulation of the responder count; the
/// largest deviation is reported in standard errors.
pub fn gng_monte_carlo(designs: usize, reps: u64, seed: u64) -> CheckOutcome {
    let mut r = rng::stream(seed, &[2]);
    let mut worst_z: f64 = 0.0;
    for d in 0..designs {
        let design = random_design(&mut r);
        let exact = gng_expected_go(&design);
        let binom = Binomial::new(design.n, design.q0).expect("valid rate");
        let mut sim = rng::stream(seed, &[3, d as u64]);
        let rule: Vec<bool> = (0..=design.n).map(|k| gng_go(&design, k)).collect();
        let go = (0..reps).filter(|_| rule[binom.sample(&mut sim) as usize]).count();
        let est = go as f64 / reps as f64;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        let z = if se > 0.0 { (est - exact).abs() / se } else if est == exact { 0.0 } else { f64::INFINITY };
        worst_z = worst_z.max(z);
    }
    CheckOutcome::new(
        "gng_monte_carlo",
        worst_z <= 3.0,
        format!("{designs} designs x {reps} draws, largest deviation {worst_z:.2} SE"),
    )
}

/// Expected Go must not increase with either threshold.
pub fn gng_monotone(designs: usize, seed: u64) -> CheckOutcome {
    let mut r = rng::stream(seed, &[4]);
    let mut violations = 0;
    for _ in 0..designs {
        let d = random_design(&mut r);
        let base = gng_expected_go(&d);
        let up_min = GngDesign { t_min: d.t_min + 0.02, ..d.clone() };
        let up_base = GngDesign { t_base: d.t_base + 0.02, ..d.clone() };
        if gng_expected_go(&up_min) > base + 1e-12 || gng_expected_go(&up_base) > base + 1e-12 {
            violations += 1;
        }
        let s = d.n as f64 * d.q0;
        if d.posterior_tail(d.t_min + 0.02, s) > d.posterior_tail(d.t_min, s) {
            violations += 1;
        }
    }
    CheckOutcome::new("gng_monotone", violations == 0, format!("{designs} designs, {violations} violations"))
}

fn all_candidates() -> Vec<(CandidateModel, [f64; 2])> {
    let lib = BaseFunctionLibrary::builtin();
    let sets: [(&[&str], &[&str], OutputLink, usize); 4] = [
        (&["sim1.f1.1", "sim1.f1.2", "sim1.f1.3"], &["sim1.f2.1", "sim1.f2.2", "sim1.f2.3", "sim1.f2.4"], OutputLink::Identity, 3),
        (&["sim1.f1.1", "sim1.f1.2", "sim1.f1.3"], &["sim2.f2.1", "sim2.f2.2", "sim2.f2.3", "sim2.f2.4"], OutputLink::Sigmoid, 3),
        (&["sim3.f1.1", "sim3.f1.2", "sim3.f1.3"], &["sim3.f2.1", "sim3.f2.2", "sim3.f2.3"], OutputLink::SoftmaxPair, 3),
        (&["nhanes.f1.1", "nhanes.f1.2", "nhanes.f1.3"], &["nhanes.f2.1", "nhanes.f2.2", "nhanes.f2.3"], OutputLink::Identity, 2),
    ];
    let mut out = Vec::new();
    for (f1, f2, link, m) in sets {
        let f1 = lib.resolve(f1).expect("builtin");
        let f2 = lib.resolve(f2).expect("builtin");
        let pool: Vec<usize> = (0..m).collect();
        let upstream = if link == OutputLink::SoftmaxPair { [0.3, -0.8] } else { [1.0, 0.0] };
        for c in enumerate_candidates(&f1, &f2, 2, &PairingMode::DistinctCombinations, &pool, None, link).expect("builtin sets") {
            out.push((c, upstream));
        }
    }
    out
}

/// Reverse-mode candidate gradients against central differences at random
/// parameters and inputs inside each family's domain.
pub fn tape_gradients(probes: usize, seed: u64) -> CheckOutcome {
    let mut r = rng::stream(seed, &[5]);
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    for (model, upstream) in all_candidates() {
        let width = model.output_link.width();
        let up = &upstream[..width];
        for _ in 0..probes {
            let theta: Vec<f64> = (0..model.n_params()).map(|_| r.random_range(-1.0..1.0)).collect();
            // inputs in (0.05, 0.45) keep probabilities and quantiles valid
            let x: Vec<f64> = (0..3).map(|_| r.random_range(0.05..0.45)).collect();
            let m = model.clone().with_theta(theta.clone()).expect("sized");
            let Ok(grad) = m.gradient(&x, up) else { continue };
            let f = |t: &[f64]| -> Option<f64> {
                let o = model.clone().with_theta(t.to_vec()).ok()?.evaluate(&x).ok()?;
                Some(o.iter().zip(up).map(|(a, b)| a * b).sum())
            };
            for i in 0..theta.len() {
                let h = 1e-6 * theta[i].abs().max(1.0);
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let (Some(fp), Some(fm)) = (f(&tp), f(&tm)) else { continue };
                let fd = (fp - fm) / (2.0 * h);
                let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
                worst = worst.max(err);
            }
            evaluated += 1;
        }
    }
    CheckOutcome::new(
        "tape_gradients",
        worst <= 1e-5 && evaluated > 0,
        format!("{evaluated} probes over all builtin candidates, worst relative error {worst:.2e}"),
    )
}

fn random_dataset(r: &mut impl Rng, rows: usize, inputs: usize, classify: bool) -> Dataset {
    let feats: Vec<String> = (0..inputs).map(|i| format!("x{i}")).collect();
    let targets: Vec<String> = if classify { vec!["y0".into(), "y1".into()] } else { vec!["y".into()] };
    let data: Vec<(Vec<f64>, Vec<f64>)> = (0..rows)
        .map(|_| {
            let x: Vec<f64> = (0..inputs).map(|_| r.random_range(-1.0..1.0)).collect();
            let y = if classify {
                if r.random_bool(0.5) { vec![0.0, 1.0] } else { vec![1.0, 0.0] }
            } else {
                vec![r.random_range(0.0..1.0)]
            };
            (x, y)
        })
        .collect();
    Dataset::from_rows(feats, targets, &data).expect("fixed width")
}

/// Network loss gradients against central differences of the loss.
pub fn mlp_gradients(probes: usize, seed: u64) -> CheckOutcome {
    let mut r = rng::stream(seed, &[6]);
    let mut worst: f64 = 0.0;
    let shapes: [(&[usize], OutputActivation); 3] = [
        (&[3, 5, 4, 1], OutputActivation::Sigmoid),
        (&[3, 6, 2], OutputActivation::Softmax),
        (&[2, 3, 1], OutputActivation::Sigmoid),
    ];
    for p in 0..probes {
        let (widths, act) = shapes[p % shapes.len()];
        let spec = MlpSpec::new(widths, act);
        let data = random_dataset(&mut r, 8, widths[0], act == OutputActivation::Softmax);
        let mut st = MlpState::init(&spec, &mut r).expect("valid spec");
        for v in st.params_mut() {
            *v += r.random_range(-0.1..0.1);
        }
        let (_, grad) = st.loss_and_grad(&data).expect("matching widths");
        for i in 0..grad.len() {
            let h = 1e-6;
            let orig = st.params()[i];
            st.params_mut()[i] = orig + h;
            let lp = st.loss(&data).expect("ok");
            st.params_mut()[i] = orig - h;
            let lm = st.loss(&data).expect("ok");
            st.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-2);
            worst = worst.max(err);
        }
    }
    CheckOutcome::new("mlp_gradients", worst <= 1e-4, format!("{probes} networks, worst relative error {worst:.2e}"))
}

pub fn parameter_counts() -> CheckOutcome {
    let count = |w: &[usize], a| mlp::param_count(&MlpSpec::new(w, a));
    let avg = mlp::complexity(&MlpSpec::new(&[3, 60, 60, 2], OutputActivation::Softmax), ComplexityKind::AvgParamsPerLayer);
    let lib = BaseFunctionLibrary::builtin();
    let f1 = lib.resolve(&["sim1.f1.2"]).expect("builtin");
    let f2 = lib.resolve(&["sim1.f2.2", "sim1.f2.3"]).expect("builtin");
    let model10 = enumerate_candidates(&f1, &f2, 2, &PairingMode::DistinctCombinations, &[0, 1, 2], None, OutputLink::Identity)
        .expect("builtin")
        .remove(0);
    let got = (
        count(&[3, 60, 60, 1], OutputActivation::Sigmoid),
        count(&[3, 2, 1], OutputActivation::Sigmoid),
        count(&[3, 60, 60, 2], OutputActivation::Softmax),
        avg.display(),
        model10.n_params(),
    );
    let ok = got == (3961, 11, 4022, 1341.0, 7) && (avg.value - 4022.0 / 3.0).abs() < 1e-12;
    CheckOutcome::new(
        "parameter_counts",
        ok,
        format!("3-60-60-1: {}, 3-2-1: {}, 3-60-60-2: {} (avg {:.2}, shown {}), f1.2{{f2.2, f2.3}}: {}", got.0, got.1, got.2, avg.value, got.3, got.4),
    )
}

pub fn normal_round_trip() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for i in 1..2000 {
        let p = i as f64 / 2000.0;
        let z = stats::normal_quantile(p).expect("interior p").0;
        worst = worst.max((stats::normal_cdf(z) - p).abs() / p.min(1.0 - p));
    }
    CheckOutcome::new("normal_round_trip", worst <= 1e-12, format!("worst relative error {worst:.2e}"))
}

pub fn binomial_exact() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for n in [1u64, 5, 12, 20, 40] {
        for k in 0..=n {
            let exact = choose_u128(n, k) as f64 / 2f64.powi(n as i32);
            let lib = stats::binom_pmf(k, n, 0.5).expect("k <= n");
            worst = worst.max((lib - exact).abs() / exact);
        }
        let total: f64 = (0..=n).map(|k| stats::binom_pmf(k, n, 0.3).expect("k <= n")).sum();
        worst = worst.max((total - 1.0).abs());
    }
    CheckOutcome::new("binomial_exact", worst <= 1e-12, format!("worst error {worst:.2e}"))
}

/// The default oracle suite; finishes in seconds.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        cp_mc_identity(1000, seed),
        fisher_enumeration(25),
        gng_monte_carlo(5, 1_000_000, seed),
        gng_monotone(50, seed),
        tape_gradients(3, seed),
        mlp_gradients(9, seed),
        parameter_counts(),
        normal_round_trip(),
        binomial_exact(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_oracle_reference_points() {
        assert!((fisher_oracle(0, 5, 5) - 1.0 / 252.0).abs() < 1e-15);
        assert!((fisher_oracle(0, 10, 10) - 1.0 / 184_756.0).abs() < 1e-18);
        assert_eq!(fisher_oracle(3, 3, 8), fisher_oracle(3, 3, 8));
        assert!(fisher_oracle(4, 4, 10) >= 0.5);
    }

    #[test]
    fn suite_passes() {
        for c in run_all(7) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
