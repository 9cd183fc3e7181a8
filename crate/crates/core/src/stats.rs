//! Special functions and exact tests.
//!
//! Everything here is a pure function of its arguments. Tail probabilities are
//! evaluated in log space wherever factorials or gamma functions appear.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
}

fn domain(op: &'static str, detail: impl Into<String>) -> StatError {
    StatError::Domain {
        op,
        detail: detail.into(),
    }
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Prob(f64);

impl Prob {
    pub fn new(value: f64) -> Result<Self, StatError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Prob(value))
        } else {
            Err(domain("Prob::new", format!("{value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Prob {
        Prob(1.0 - self.0)
    }
}

impl TryFrom<f64> for Prob {
    type Error = StatError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Prob::new(value)
    }
}

impl From<Prob> for f64 {
    fn from(p: Prob) -> f64 {
        p.0
    }
}

/// A standard-normal deviate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ZScore(pub f64);

impl ZScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// erf(x) for |x| < 3 from the all-positive series
/// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum 2^n x^(2n+1) / (2n+1)!!
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) for x >= 3 by the Laplace continued fraction (modified Lentz).
fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < 3.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        0.5 * erfc(-z * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(z * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - Phi(z)` without cancellation for large positive `z`.
pub fn normal_sf(z: f64) -> f64 {
    normal_cdf(-z)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation, relative error ~1.2e-9 before refinement.
const QA: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QB: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QC: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QD: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn quantile_rational(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    } else {
        -quantile_rational(1.0 - p)
    }
}

/// Inverse of [`normal_cdf`] on the open interval (0, 1).
pub fn normal_quantile(p: f64) -> Result<ZScore, StatError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("normal_quantile", format!("p = {p} not in (0, 1)")));
    }
    Ok(ZScore(normal_quantile_unchecked(p)))
}

/// Lower-tail quantile. Caller guarantees `0 < p < 1`.
pub(crate) fn normal_quantile_unchecked(p: f64) -> f64 {
    let mut x = quantile_rational(p);
    // Newton refinement; the residual is taken in whichever tail is small.
    for _ in 0..2 {
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let err = if x <= 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_sf(x)
        };
        x -= err / pdf;
    }
    x
}

/// `Phi^{-1}(1 - p)` computed from `p` directly, extended to the closed
/// interval: `p = 0` maps to `+inf`, `p = 1` to `-inf`.
pub fn upper_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else if p >= 1.0 {
        f64::NEG_INFINITY
    } else {
        -normal_quantile_unchecked(p)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0_f64;
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// ln(n!) exact to rounding for small n, Lanczos beyond the table.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE {
        ln_fact_table()[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const BETA_CF_MAX_ITER: usize = 20_000;

/// Continued fraction for I_x(a, b); converges for x < (a+1)/(a+b+2).
/// `y` is `1 - x`, passed separately to keep precision near 1.
fn inc_beta_cf(a: f64, b: f64, x: f64, y: f64) -> f64 {
    let tiny = 1e-300;
    let eps = 1e-16;
    let ln_prefix = a * x.ln() + b * y.ln() - ln_beta(a, b);
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < eps {
            break;
        }
    }
    (ln_prefix.exp() / a) * h
}

/// Returns `(I_x(a,b), 1 - I_x(a,b))`, each computed without cancellation.
fn inc_beta_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        let upper = inc_beta_cf(b, a, y, x);
        (1.0 - upper, upper)
    } else {
        let lower = inc_beta_cf(a, b, x, y);
        (lower, 1.0 - lower)
    }
}

fn check_shape(op: &'static str, a: f64, b: f64) -> Result<(), StatError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(domain(op, format!("shape parameters a = {a}, b = {b} must be positive")));
    }
    Ok(())
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64, StatError> {
    check_shape("reg_inc_beta", a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("reg_inc_beta", format!("x = {x} outside [0, 1]")));
    }
    Ok(inc_beta_pair(a, b, x, 1.0 - x).0)
}

/// Posterior upper tail `P(q >= threshold)` for `q ~ Beta(a, b)`.
pub fn beta_tail(threshold: f64, a: f64, b: f64) -> Result<f64, StatError> {
    check_shape("beta_tail", a, b)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(domain("beta_tail", format!("threshold = {threshold} outside [0, 1]")));
    }
    Ok(inc_beta_pair(a, b, threshold, 1.0 - threshold).1)
}

/// Upper-tail probability `P(T >= t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64, StatError> {
    if !(df > 0.0) {
        return Err(domain("student_t_sf", format!("df = {df} must be positive")));
    }
    if !t.is_finite() {
        return Err(domain("student_t_sf", format!("t = {t} not finite")));
    }
    Ok(student_t_sf_unchecked(t, df))
}

pub(crate) fn student_t_sf_unchecked(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    // P(|T| >= |t|) = I_x(df/2, 1/2)
    let two_sided = inc_beta_pair(0.5 * df, 0.5, x, y).0;
    if t > 0.0 {
        0.5 * two_sided
    } else {
        1.0 - 0.5 * two_sided
    }
}

/// Binomial probability mass `C(n,k) p^k (1-p)^(n-k)`.
pub fn binom_pmf(k: u64, n: u64, p: f64) -> Result<f64, StatError> {
    if k > n {
        return Err(domain("binom_pmf", format!("k = {k} > n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(domain("binom_pmf", format!("p = {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    if n <= 2 * EXACT_FISHER_MAX_N {
        let direct = choose_u128(n, k) as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        if direct.is_normal() {
            return Ok(direct);
        }
    }
    let ln = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    Ok(ln.exp())
}

/// Largest group size for which every binomial `C(2n, k)` fits in `u128`.
const EXACT_FISHER_MAX_N: u64 = 60;

fn choose_u128(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k as u128).fold(1, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// One-sided Fisher exact p-value for "group 2 has higher odds than group 1".
///
/// Both groups have `n` subjects; `q1` and `q2` are responder counts. The
/// p-value is `P(X >= q2)` where `X` is the group-2 responder count under the
/// hypergeometric law with both margins fixed.
pub fn fisher_exact_greater(q1: u64, q2: u64, n: u64) -> Result<f64, StatError> {
    if n == 0 || q1 > n || q2 > n {
        return Err(domain(
            "fisher_exact_greater",
            format!("counts q1 = {q1}, q2 = {q2} must lie in 0..={n}, n > 0"),
        ));
    }
    let m = q1 + q2;
    let total = 2 * n;
    let hi = m.min(n);
    if n <= EXACT_FISHER_MAX_N {
        // integer sums keep p-values that equal a rational cutoff exact
        let tail: u128 = (q2..=hi).map(|x| choose_u128(n, x) * choose_u128(n, m - x)).sum();
        return Ok(tail as f64 / choose_u128(total, m) as f64);
    }
    let ln_denom = ln_choose(total, m);
    let ln_pmf = |x: u64| ln_choose(n, x) + ln_choose(n, m - x) - ln_denom;
    let mut p = 0.0;
    for x in q2..=hi {
        p += ln_pmf(x).exp();
    }
    Ok(p.min(1.0))
}

/// Pearson product-moment correlation.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64, StatError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(domain(
            "pearson_correlation",
            format!("need equal lengths >= 2, got {} and {}", a.len(), b.len()),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 || !(saa.is_finite() && sbb.is_finite()) {
        return Err(StatError::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receive their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman_correlation(a: &[f64], b: &[f64]) -> Result<f64, StatError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(domain(
            "spearman_correlation",
            format!("need equal lengths >= 2, got {} and {}", a.len(), b.len()),
        ));
    }
    pearson_correlation(&average_ranks(a), &average_ranks(b))
}

/// `Z_{1-alpha}` as used by sample-size kernels.
pub fn z_upper(alpha: f64) -> Result<ZScore, StatError> {
    normal_quantile(1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!(close(normal_cdf(1.959964), 0.975, 1e-6));
        for z in [-7.5, -3.2, -1.0, 0.3, 2.2, 5.0] {
            assert!(close(normal_cdf(z) + normal_cdf(-z), 1.0, 1e-12));
        }
    }

    #[test]
    fn normal_quantile_reference_points() {
        assert!(normal_quantile(0.5).unwrap().value().abs() < 1e-15);
        assert!(close(normal_quantile(0.95).unwrap().value(), 1.644854, 1e-5));
        assert!(close(normal_quantile(0.975).unwrap().value(), 1.959964, 1e-5));
    }

    #[test]
    fn normal_quantile_rejects_endpoints() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err(), "p = {p}");
        }
    }

    #[test]
    fn upper_quantile_extends_to_closed_interval() {
        assert_eq!(upper_quantile(0.0), f64::INFINITY);
        assert_eq!(upper_quantile(1.0), f64::NEG_INFINITY);
        assert!(close(upper_quantile(0.025), 1.959964, 1e-5));
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..30u64 {
            let exact = ln_factorial(n - 1);
            assert!(close(ln_gamma(n as f64), exact, 1e-12 * exact.abs().max(1.0)));
        }
        assert!(close(ln_gamma(0.5), PI.sqrt().ln(), 1e-13));
    }

    #[test]
    fn student_t_reference_points() {
        assert_eq!(student_t_sf(0.0, 3.0).unwrap(), 0.5);
        assert!(close(student_t_sf(2.0, 10.0).unwrap(), 0.036694, 1e-5));
        assert!(close(student_t_sf(1.959964, 1e6).unwrap(), 0.025, 1e-4));
        assert!(student_t_sf(1.0, 0.0).is_err());
        assert!(student_t_sf(1.0, -2.0).is_err());
    }

    #[test]
    fn beta_tail_reference_points() {
        assert_eq!(beta_tail(0.0, 3.0, 4.0).unwrap(), 1.0);
        assert!(close(beta_tail(0.5, 1.0, 1.0).unwrap(), 0.5, 1e-15));
        assert!(beta_tail(0.5, 0.0, 1.0).is_err());
        assert!(beta_tail(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn binom_pmf_reference_points() {
        assert_eq!(binom_pmf(0, 5, 0.0).unwrap(), 1.0);
        assert!(close(binom_pmf(2, 4, 0.5).unwrap(), 0.375, 1e-15));
        assert!(binom_pmf(6, 5, 0.5).is_err());
    }

    #[test]
    fn fisher_reference_points() {
        assert!(close(fisher_exact_greater(0, 5, 5).unwrap(), 1.0 / 252.0, 1e-9));
        for n in 1..12 {
            for q in 0..=n {
                assert!(fisher_exact_greater(q, q, n).unwrap() >= 0.5);
            }
        }
        assert!(fisher_exact_greater(6, 1, 5).is_err());
        // C(6, 3) = 20: the p-value sits exactly on the usual cutoff
        assert_eq!(fisher_exact_greater(0, 3, 3).unwrap(), 0.05);
        let (exact, logspace) = (fisher_exact_greater(20, 35, 60).unwrap(), fisher_exact_greater(20, 35, 61).unwrap());
        assert!(exact > 0.0 && logspace > 0.0 && logspace < 1.0);
    }

    #[test]
    fn correlation_reference_points() {
        assert!(close(pearson_correlation(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0, 1e-15));
        assert!(close(pearson_correlation(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0, 1e-15));
        assert!(close(
            pearson_correlation(&[1., 2., 4.], &[2., 2., 5.]).unwrap(),
            // cross-deviation sum 5, squared-deviation sums 42/9 and 6
            5.0 / 28f64.sqrt(),
            1e-12
        ));
        assert_eq!(
            pearson_correlation(&[1., 1., 1.], &[1., 2., 3.]),
            Err(StatError::UndefinedCorrelation)
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10., 20., 10., 5.]), vec![2.5, 4.0, 2.5, 1.0]);
    }
}
