//! Statistical machinery: sample sizing, paired hypothesis tests
//! (McNemar, paired t, Wilcoxon signed rank), and confidence intervals.
//!
//! Distribution functions are computed locally (Lanczos log-gamma,
//! regularized incomplete gamma/beta, Acklam normal quantile) so results
//! do not depend on an external numerics crate.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{EvalError, Result};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

// ---------------------------------------------------------------------------
// special functions

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS_COEF[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

/// Regularized lower incomplete gamma P(a, x).
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) by continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized incomplete beta I_x(a, b) by continued fraction.
pub(crate) fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
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
    for m in 1..500 {
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
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Standard normal CDF via the incomplete gamma function.
pub fn normal_cdf(z: f64) -> f64 {
    let p_half = 0.5 * gamma_p(0.5, z * z / 2.0);
    if z >= 0.0 {
        0.5 + p_half
    } else {
        0.5 - p_half
    }
}

/// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9),
/// polished with one Newton step against `normal_cdf`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(EvalError::InvalidInput(format!(
            "quantile probability must be in (0,1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Newton polish
    let e = normal_cdf(x) - p;
    let pdf = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(x - e / pdf)
}

/// Student t CDF with `df` degrees of freedom.
pub fn students_t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student t quantile by bisection against `students_t_cdf`.
pub fn students_t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(EvalError::InvalidInput(format!(
            "quantile probability must be in (0,1), got {p}"
        )));
    }
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if students_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chi-square upper tail with 1 df (used by the McNemar large-sample path).
fn chi2_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q_cf_or_series(0.5, x / 2.0)
}

fn gamma_q_cf_or_series(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - gamma_p(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

// ---------------------------------------------------------------------------
// sample sizing

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSizeSpec {
    /// Two-sided confidence level; mutually exclusive with `z`.
    pub confidence: Option<f64>,
    pub z: Option<f64>,
    pub expected_metric: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSize {
    pub n: u64,
    pub z: f64,
    pub degenerate: bool,
}

/// n = ceil(z^2 * m(1-m) / eps^2), z from the two-sided normal quantile
/// when a confidence level is given.
pub fn required_sample_size(spec: &SampleSizeSpec) -> Result<SampleSize> {
    let z = match (spec.confidence, spec.z) {
        (Some(c), None) => {
            if !(0.0 < c && c < 1.0) {
                return Err(EvalError::InvalidInput(format!(
                    "confidence must be in (0,1), got {c}"
                )));
            }
            normal_quantile((1.0 + c) / 2.0)?
        }
        (None, Some(z)) => {
            if z <= 0.0 {
                return Err(EvalError::InvalidInput("z must be > 0".into()));
            }
            z
        }
        _ => {
            return Err(EvalError::InvalidInput(
                "exactly one of confidence or z must be supplied".into(),
            ))
        }
    };
    let m = spec.expected_metric;
    if !(0.0..=1.0).contains(&m) {
        return Err(EvalError::InvalidInput(format!(
            "expected metric must be in [0,1], got {m}"
        )));
    }
    if spec.margin <= 0.0 || spec.margin >= 1.0 {
        return Err(EvalError::InvalidInput(format!(
            "margin must be in (0,1), got {}",
            spec.margin
        )));
    }
    if m == 0.0 || m == 1.0 {
        return Ok(SampleSize {
            n: 0,
            z,
            degenerate: true,
        });
    }
    let n = (z * z * m * (1.0 - m) / (spec.margin * spec.margin)).ceil() as u64;
    Ok(SampleSize {
        n,
        z,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// test results

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectSize {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub effect_size: Option<EffectSize>,
    /// alpha (as a string key for stable serialization) -> significant
    pub significant_at: BTreeMap<String, bool>,
    pub method_note: String,
}

impl TestResult {
    fn new(name: &str, statistic: f64, p: f64, n: usize, effect: Option<EffectSize>, note: &str) -> Self {
        let p = p.clamp(0.0, 1.0);
        let significant_at = DEFAULT_ALPHAS
            .iter()
            .map(|&a| (format!("{a}"), p < a))
            .collect();
        TestResult {
            test_name: name.to_string(),
            statistic,
            p_value: p,
            n_effective: n,
            effect_size: effect,
            significant_at,
            method_note: note.to_string(),
        }
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

// ---------------------------------------------------------------------------
// McNemar

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// P(X <= k) for X ~ Binomial(n, 0.5).
fn binom_cdf_half(k: u64, n: u64) -> f64 {
    let ln_half_n = n as f64 * 0.5f64.ln();
    (0..=k).map(|i| (ln_choose(n, i) + ln_half_n).exp()).sum()
}

/// McNemar's test on paired binary outcomes. Exact binomial when the
/// discordant count is below 25, chi-square with continuity correction
/// otherwise.
pub fn mcnemar(paired: &[(u8, u8)]) -> Result<TestResult> {
    if paired.is_empty() {
        return Err(EvalError::InvalidInput("mcnemar requires >= 1 pair".into()));
    }
    for &(a, b) in paired {
        if a > 1 || b > 1 {
            return Err(EvalError::InvalidInput("outcomes must be 0 or 1".into()));
        }
    }
    let b_cnt = paired.iter().filter(|&&(a, b)| a == 1 && b == 0).count() as u64;
    let c_cnt = paired.iter().filter(|&&(a, b)| a == 0 && b == 1).count() as u64;
    let n_disc = b_cnt + c_cnt;
    let odds = if c_cnt == 0 {
        if b_cnt == 0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        b_cnt as f64 / c_cnt as f64
    };
    let effect = Some(EffectSize {
        label: "odds_ratio_b_over_c".into(),
        value: odds,
    });
    if n_disc == 0 {
        return Ok(TestResult::new(
            "mcnemar",
            0.0,
            1.0,
            paired.len(),
            effect,
            "degenerate: no discordant pairs",
        ));
    }
    if n_disc < 25 {
        let k = b_cnt.min(c_cnt);
        let p = (2.0 * binom_cdf_half(k, n_disc)).min(1.0);
        Ok(TestResult::new(
            "mcnemar",
            k as f64,
            p,
            paired.len(),
            effect,
            "exact binomial",
        ))
    } else {
        let stat = ((b_cnt as f64 - c_cnt as f64).abs() - 1.0).powi(2) / n_disc as f64;
        let p = chi2_sf_1df(stat);
        Ok(TestResult::new(
            "mcnemar",
            stat,
            p,
            paired.len(),
            effect,
            "chi-square with continuity correction",
        ))
    }
}

// ---------------------------------------------------------------------------
// paired t

pub fn paired_t(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.len() != ys.len() {
        return Err(EvalError::InvalidInput("length mismatch".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::InvalidInput("paired t requires n >= 2".into()));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    // constant differences up to float rounding count as zero variance
    if sd <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
        return if mean == 0.0 {
            Ok(TestResult::new(
                "paired_t",
                0.0,
                1.0,
                n,
                Some(EffectSize { label: "cohens_dz".into(), value: 0.0 }),
                "degenerate: all differences zero",
            ))
        } else {
            Ok(TestResult::new(
                "paired_t",
                mean.signum() * f64::INFINITY,
                0.0,
                n,
                Some(EffectSize {
                    label: "cohens_dz".into(),
                    value: mean.signum() * f64::INFINITY,
                }),
                "degenerate: zero-variance nonzero shift",
            ))
        };
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let p = 2.0 * students_t_cdf(-t.abs(), df);
    Ok(TestResult::new(
        "paired_t",
        t,
        p,
        n,
        Some(EffectSize {
            label: "cohens_dz".into(),
            value: mean / sd,
        }),
        "two-sided Student t",
    ))
}

// ---------------------------------------------------------------------------
// Wilcoxon signed rank

pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Average ranks of |d|, ranks doubled so ties stay integral.
fn doubled_ranks(abs_diffs: &[f64]) -> Vec<u64> {
    let n = abs_diffs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| abs_diffs[a].total_cmp(&abs_diffs[b]));
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_diffs[idx[j + 1]] == abs_diffs[idx[i]] {
            j += 1;
        }
        // average of ranks i+1..=j+1, doubled
        let sum2: u64 = ((i + 1) as u64 + (j + 1) as u64) * (j - i + 1) as u64;
        let avg2 = sum2 / (j - i + 1) as u64;
        for &k in &idx[i..=j] {
            ranks2[k] = avg2;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact two-sided p by dynamic programming over the distribution of the
/// positive rank sum: P(min(W+, W-) <= observed min).
fn wilcoxon_exact_p(ranks2: &[u64], w_min2: u64) -> f64 {
    let total2: u64 = ranks2.iter().sum();
    let mut dist = vec![0.0f64; total2 as usize + 1];
    dist[0] = 1.0;
    for &r in ranks2 {
        for w in (r as usize..dist.len()).rev() {
            dist[w] += dist[w - r as usize];
        }
    }
    let denom = 2f64.powi(ranks2.len() as i32);
    let mut count = 0.0;
    for (w, &c) in dist.iter().enumerate() {
        let w = w as u64;
        if w.min(total2 - w) <= w_min2 {
            count += c;
        }
    }
    (count / denom).min(1.0)
}

/// Normal approximation with tie correction and continuity correction.
pub(crate) fn wilcoxon_approx_p(ranks2: &[u64], w_plus2: u64) -> f64 {
    let n = ranks2.len() as f64;
    let mean2 = n * (n + 1.0) / 2.0; // doubled scale: 2 * n(n+1)/4
    // tie correction on doubled ranks: var(2W+) = 4 var(W+)
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &r in ranks2 {
        *counts.entry(r).or_insert(0) += 1;
    }
    let tie_term: f64 = counts
        .values()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var2 = 4.0 * (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0);
    if var2 <= 0.0 {
        return 1.0;
    }
    let w2 = w_plus2 as f64;
    let diff = w2 - mean2;
    let cc = 1.0; // 0.5 on the doubled scale
    let z = (diff.abs() - cc).max(0.0) / var2.sqrt();
    2.0 * normal_cdf(-z)
}

/// Wilcoxon signed rank test; zero differences dropped, average ranks for
/// ties, exact enumeration up to n = 20.
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.len() != ys.len() {
        return Err(EvalError::InvalidInput("length mismatch".into()));
    }
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestResult::new(
            "wilcoxon_signed_rank",
            0.0,
            1.0,
            0,
            Some(EffectSize { label: "rank_biserial".into(), value: 0.0 }),
            "degenerate: all differences zero",
        ));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let w_plus2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w_min2 = w_plus2.min(w_minus2);
    let rank_biserial = (w_plus2 as f64 - w_minus2 as f64) / total2 as f64;
    let effect = Some(EffectSize {
        label: "rank_biserial".into(),
        value: rank_biserial,
    });
    let (p, note) = if n <= WILCOXON_EXACT_MAX_N {
        (wilcoxon_exact_p(&ranks2, w_min2), "exact enumeration")
    } else {
        (wilcoxon_approx_p(&ranks2, w_plus2), "normal approximation with tie and continuity correction")
    };
    Ok(TestResult::new(
        "wilcoxon_signed_rank",
        w_min2 as f64 / 2.0,
        p,
        n,
        effect,
        note,
    ))
}

// ---------------------------------------------------------------------------
// confidence intervals

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

/// mean +/- t_{n-1,(1+conf)/2} * sd/sqrt(n); point estimate only at n = 1.
pub fn mean_ci(scores: &[f64], confidence: f64) -> Result<MeanCi> {
    if scores.is_empty() {
        return Err(EvalError::InvalidInput("mean_ci on empty input".into()));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(EvalError::InvalidInput("confidence must be in (0,1)".into()));
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(MeanCi {
            mean,
            lower: None,
            upper: None,
            sd: None,
            n,
        });
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let t = students_t_quantile((1.0 + confidence) / 2.0, n as f64 - 1.0)?;
    let half = t * sd / (n as f64).sqrt();
    Ok(MeanCi {
        mean,
        lower: Some(mean - half),
        upper: Some(mean + half),
        sd: Some(sd),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_match_tabulated_values() {
        assert!((normal_quantile(0.975).unwrap() - 1.959963985).abs() < 1e-7);
        assert!((normal_quantile(0.995).unwrap() - 2.5758293035).abs() < 1e-7);
        assert!((normal_quantile(0.5).unwrap()).abs() < 1e-12);
        assert!((students_t_quantile(0.975, 1.0).unwrap() - 12.7062047362).abs() < 1e-6);
        assert!((students_t_quantile(0.975, 4.0).unwrap() - 2.7764451052).abs() < 1e-7);
    }

    #[test]
    fn sample_size_reproduces_closed_forms() {
        let n = required_sample_size(&SampleSizeSpec {
            confidence: Some(0.95),
            z: None,
            expected_metric: 0.8,
            margin: 0.05,
        })
        .unwrap();
        assert_eq!(n.n, 246);
        let n = required_sample_size(&SampleSizeSpec {
            confidence: None,
            z: Some(1.96),
            expected_metric: 0.5,
            margin: 0.05,
        })
        .unwrap();
        assert_eq!(n.n, 385);
        let n = required_sample_size(&SampleSizeSpec {
            confidence: Some(0.95),
            z: None,
            expected_metric: 0.8,
            margin: 0.025,
        })
        .unwrap();
        // quadratic growth: halving the margin roughly quadruples n
        assert_eq!(n.n, 984);
    }

    #[test]
    fn sample_size_degenerate_metric() {
        let n = required_sample_size(&SampleSizeSpec {
            confidence: Some(0.95),
            z: None,
            expected_metric: 1.0,
            margin: 0.05,
        })
        .unwrap();
        assert_eq!(n.n, 0);
        assert!(n.degenerate);
    }

    #[test]
    fn mcnemar_symmetric_and_exact() {
        let mut pairs = vec![(1u8, 0u8); 5];
        pairs.extend(vec![(0, 1); 5]);
        let r = mcnemar(&pairs).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);

        // b=15, c=5: exact p = 2 * P(X <= 5; n=20, p=.5) = 2*21700/2^20
        let mut pairs = vec![(1u8, 0u8); 15];
        pairs.extend(vec![(0, 1); 5]);
        let r = mcnemar(&pairs).unwrap();
        let expected = 2.0 * 21700.0 / (1u64 << 20) as f64;
        assert!((r.p_value - expected).abs() < 1e-10, "{}", r.p_value);
        assert!((r.p_value - 0.0414).abs() < 0.0005);
    }

    #[test]
    fn mcnemar_degenerate_concordant() {
        let pairs = vec![(1u8, 1u8), (0, 0), (1, 1)];
        let r = mcnemar(&pairs).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.method_note.contains("degenerate"));
    }

    #[test]
    fn mcnemar_swap_columns_preserves_p() {
        let mut pairs = vec![(1u8, 0u8); 12];
        pairs.extend(vec![(0, 1); 4]);
        let swapped: Vec<(u8, u8)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let r1 = mcnemar(&pairs).unwrap();
        let r2 = mcnemar(&swapped).unwrap();
        assert!((r1.p_value - r2.p_value).abs() < 1e-12);
    }

    #[test]
    fn paired_t_known_case() {
        // diffs [1..5]: t = 3 / (1.5811/sqrt(5)) ~ 4.2426, p ~ 0.0132
        let ys = [0.0; 5];
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t(&xs, &ys).unwrap();
        assert!((r.statistic - 4.242640687).abs() < 1e-6);
        assert!((r.p_value - 0.01324).abs() < 1e-4, "{}", r.p_value);
    }

    #[test]
    fn paired_t_degenerate_paths() {
        let xs = [0.5, 0.6, 0.7];
        let r = paired_t(&xs, &xs).unwrap();
        assert_eq!(r.p_value, 1.0);
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        let r = paired_t(&ys, &xs).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.method_note.contains("degenerate"));
    }

    #[test]
    fn paired_t_sign_flip() {
        let xs = [0.1, 0.9, 0.4, 0.8];
        let ys = [0.2, 0.5, 0.6, 0.1];
        let r1 = paired_t(&xs, &ys).unwrap();
        let r2 = paired_t(&ys, &xs).unwrap();
        assert!((r1.statistic + r2.statistic).abs() < 1e-12);
        assert!((r1.p_value - r2.p_value).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_all_positive_extreme() {
        let ys = [0.0; 6];
        let xs = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let r = wilcoxon_signed_rank(&xs, &ys).unwrap();
        assert!((r.p_value - 2.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_identity_degenerate() {
        let xs = [1.0, 2.0, 3.0];
        let r = wilcoxon_signed_rank(&xs, &xs).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_antisymmetric() {
        let xs = [1.0, -2.0, 3.0, 0.5];
        let ys = [0.0; 4];
        let r1 = wilcoxon_signed_rank(&xs, &ys).unwrap();
        let r2 = wilcoxon_signed_rank(&ys, &xs).unwrap();
        assert_eq!(r1.statistic, r2.statistic);
        assert!((r1.p_value - r2.p_value).abs() < 1e-12);
    }

    #[test]
    fn mean_ci_cases() {
        let r = mean_ci(&[0.7, 0.7, 0.7], 0.95).unwrap();
        assert!((r.mean - 0.7).abs() < 1e-12);
        assert!((r.upper.unwrap() - r.lower.unwrap()).abs() < 1e-9);

        let r = mean_ci(&[0.0, 1.0], 0.95).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-12);
        let half = r.upper.unwrap() - r.mean;
        assert!((half - 6.353102).abs() < 1e-3, "{half}");

        let r = mean_ci(&[0.3], 0.95).unwrap();
        assert!(r.lower.is_none());
    }
}
