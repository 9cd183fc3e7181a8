//! Special functions and generators against independent computations.

use interpfn_core::rng;
use interpfn_core::stats::{
    beta_tail, binom_pmf, fisher_exact_greater, normal_cdf, normal_quantile, reg_inc_beta, student_t_sf,
    upper_quantile,
};
use interpfn_core::studies::{gng_expected_go, trial_power, GngDesign, StageTest, TrialDesign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn incomplete_beta_matches_quadrature() {
    // integer-ish shapes >= 1 keep the integrand smooth at the ends
    for &(a, b) in &[(1.0, 1.0), (2.0, 3.0), (5.5, 2.25), (12.0, 30.0), (1.5, 8.0)] {
        // t = u^2 removes the square-root cusp at zero when a is fractional
        let density = |u: f64| 2.0 * u.powf(2.0 * a - 1.0) * (1.0 - u * u).powf(b - 1.0);
        let norm = simpson(density, 0.0, 1.0, 20_000);
        for &x in &[0.05, 0.3, 0.5, 0.77, 0.95] {
            let want = simpson(density, 0.0, f64::sqrt(x), 20_000) / norm;
            let got = reg_inc_beta(x, a, b).unwrap();
            assert!((got - want).abs() < 1e-9, "I_{x}({a}, {b}) = {got}, quadrature {want}");
            assert!((beta_tail(x, a, b).unwrap() - (1.0 - want)).abs() < 1e-9);
        }
    }
}

#[test]
fn student_t_tail_matches_quadrature() {
    for &df in &[3.0, 7.5, 30.0, 118.0] {
        let ln_c = interpfn_core::stats::ln_gamma((df + 1.0) / 2.0)
            - interpfn_core::stats::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |t: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp();
        for &t in &[0.0, 0.4, 1.7, 3.2] {
            // tail = 1/2 - integral over [0, t]
            let want = 0.5 - simpson(pdf, 0.0, t, 20_000);
            let got = student_t_sf(t, df).unwrap();
            assert!((got - want).abs() < 1e-10, "df {df} t {t}: {got} vs {want}");
            assert!((student_t_sf(-t, df).unwrap() - (1.0 - want)).abs() < 1e-10);
        }
    }
}

#[test]
fn normal_quantile_round_trips() {
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        let z = normal_quantile(p).unwrap().0;
        assert!((normal_cdf(z) - p).abs() <= 1e-12 * p.min(1.0 - p), "p = {p}");
    }
    for &p in &[1e-300, 1e-100, 1e-20, 1e-8] {
        let z = normal_quantile(p).unwrap().0;
        assert!((normal_cdf(z) / p - 1.0).abs() < 1e-10, "p = {p}");
    }
    assert!((upper_quantile(0.025) - 1.959963984540054).abs() < 1e-12);
    assert!(normal_quantile(0.0).is_err() && normal_quantile(1.0).is_err());
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn choose(n: u128, k: u128) -> u128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn binomial_pmf_equals_exact_rationals() {
    // p = 3/10: pmf = C(n, k) 3^k 7^(n-k) / 10^n, exact in u128 for n <= 30
    for n in [1u64, 4, 17, 30] {
        for k in 0..=n {
            let num = choose(n as u128, k as u128) * 3u128.pow(k as u32) * 7u128.pow((n - k) as u32);
            let den = 10u128.pow(n as u32);
            let g = gcd(num, den);
            let exact = (num / g) as f64 / (den / g) as f64;
            let got = binom_pmf(k, n, 0.3).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact.max(1e-300), "k {k} n {n}: {got} vs {exact}");
        }
    }
    assert_eq!(binom_pmf(2, 4, 0.5).unwrap(), 0.375);
    assert_eq!(binom_pmf(0, 5, 0.0).unwrap(), 1.0);
}

#[test]
fn fisher_p_values_equal_hypergeometric_rationals() {
    for n in 1..=25u64 {
        for q1 in 0..=n {
            for q2 in 0..=n {
                let m = (q1 + q2) as u128;
                let nn = n as u128;
                let tail: u128 = (q2 as u128..=m.min(nn)).map(|k| choose(nn, k) * choose(nn, m - k)).sum();
                let total = choose(2 * nn, m);
                let g = gcd(tail, total);
                let exact = (tail / g) as f64 / (total / g) as f64;
                let got = fisher_exact_greater(q1, q2, n).unwrap();
                assert!((got - exact).abs() <= 1e-12 * exact, "({q1}, {q2}, {n}): {got} vs {exact}");
                // labels at the cutoff: exact rational comparison
                assert_eq!(got < 0.05, (tail / g) * 20 < (total / g), "label ({q1}, {q2}, {n})");
            }
        }
    }
}

#[test]
fn expected_go_matches_direct_simulation() {
    let d = GngDesign::new(0.2, 0.3, 0.35);
    let exact = gng_expected_go(&d);
    let reps = 400_000;
    let mut r = rng::stream(11, &[]);
    let go = (0..reps)
        .filter(|_| {
            let responders = (0..d.n).filter(|_| r.random_bool(d.q0)).count() as u64;
            interpfn_core::studies::gng_go(&d, responders)
        })
        .count();
    let est = go as f64 / reps as f64;
    let se = (exact * (1.0 - exact) / reps as f64).sqrt();
    assert!((est - exact).abs() < 4.0 * se, "exact {exact}, simulated {est}");
    assert_eq!(gng_expected_go(&GngDesign::new(0.0, 0.0, 0.4)), 1.0);
}

/// Two-stage trial simulated from individual observations.
fn raw_power(d: &TrialDesign, reps: u32, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[]);
    let mut draw = |n: u32, mu: f64| -> (f64, f64) {
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                mu + z
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        (mean, xs.iter().map(|x| (x - mean).powi(2)).sum())
    };
    let p_value = |n: u32, t: (f64, f64), c: (f64, f64)| {
        let df = 2.0 * n as f64 - 2.0;
        let sp2 = (t.1 + c.1) / df;
        student_t_sf((t.0 - c.0) / (sp2 * 2.0 / n as f64).sqrt(), df).unwrap()
    };
    let crit = upper_quantile(d.alpha);
    let mut hits = 0;
    for _ in 0..reps {
        let (t1, c1) = (draw(d.n1, d.mu0), draw(d.n1, 0.0));
        let n2 = d.stage2_size(t1.0 - c1.0);
        let (t2, c2) = (draw(n2, d.mu0), draw(n2, 0.0));
        let z = (upper_quantile(p_value(d.n1, t1, c1)) + upper_quantile(p_value(n2, t2, c2))) / 2f64.sqrt();
        if z >= crit {
            hits += 1;
        }
    }
    hits as f64 / reps as f64
}

#[test]
fn trial_power_agrees_with_raw_sample_simulation() {
    for &(n1, mu0, alpha, delta) in &[(20, 0.4, 0.05, f64::INFINITY), (35, 0.25, 0.1, 0.3), (12, 0.6, 0.025, 0.3)] {
        let d = TrialDesign { delta, mc_reps: 40_000, test: StageTest::Pooled, ..TrialDesign::new(n1, mu0, alpha) };
        let fast = trial_power(&d, 3);
        let raw = raw_power(&d, 40_000, 4);
        let se = (2.0 * fast * (1.0 - fast) / 40_000.0).sqrt();
        assert!((fast - raw).abs() < 4.0 * se, "n1 {n1} mu0 {mu0}: {fast} vs {raw}");
    }
}

#[test]
fn trial_power_is_monotone_in_effect_and_size() {
    let power = |n1, mu0| trial_power(&TrialDesign { mc_reps: 20_000, ..TrialDesign::new(n1, mu0, 0.05) }, 9);
    let se = (0.25f64 / 20_000.0).sqrt();
    let by_mu: Vec<f64> = [0.1, 0.3, 0.5, 0.7].iter().map(|&m| power(30, m)).collect();
    let by_n: Vec<f64> = [10, 25, 40, 60].iter().map(|&n| power(n, 0.3)).collect();
    for w in by_mu.windows(2).chain(by_n.windows(2)) {
        assert!(w[1] >= w[0] - 3.0 * se, "{w:?}");
    }
}
