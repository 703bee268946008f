use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WilcoxonRankSum,
    WelchT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    /// Whether the p-value came from exact enumeration.
    pub exact: bool,
}

/// Midranks of the pooled sample (1-based) and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of size-`n` subsets of `{1..total}` for each rank sum.
fn rank_sum_counts(n: usize, total: usize) -> Vec<f64> {
    // largest possible sum: the n top ranks
    let max_sum = n * (2 * total + 1 - n) / 2;
    // counts[k][s]: subsets of size k with sum s, over the ranks seen so far
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n + 1];
    counts[0][0] = 1.0;
    for r in 1..=total {
        for k in (1..=n.min(r)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    counts.swap_remove(n)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test. The statistic is the
/// rank sum of `a`.
///
/// Without ties and with the smaller sample at most 10, the p-value is exact.
/// Otherwise it uses the normal approximation with midranks, tie-corrected
/// variance and a continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::data("rank-sum test on non-finite values"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let total = na + nb;
    let w: f64 = ranks[..na].iter().sum();
    let has_ties = ties.iter().any(|&t| t > 1);

    if !has_ties && na.min(nb) <= 10 {
        // enumerate over the smaller sample; its rank sum mirrors w
        let (n, stat) = if na <= nb {
            (na, w)
        } else {
            (nb, (total * (total + 1) / 2) as f64 - w)
        };
        let counts = rank_sum_counts(n, total);
        let all: f64 = counts.iter().sum();
        let s = stat.round() as usize;
        let lower: f64 = counts[..=s].iter().sum::<f64>() / all;
        let upper: f64 = counts[s..].iter().sum::<f64>() / all;
        return Ok(TestResult {
            test: TestKind::WilcoxonRankSum,
            statistic: w,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            exact: true,
        });
    }

    Ok(normal_approximation(w, na, nb, &ties))
}

/// Normal approximation of the rank-sum test with midranks, tie-corrected
/// variance and a continuity correction, regardless of sample size.
pub fn wilcoxon_rank_sum_normal(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::data("rank-sum test on non-finite values"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..a.len()].iter().sum();
    Ok(normal_approximation(w, a.len(), b.len(), &ties))
}

fn normal_approximation(w: f64, na: usize, nb: usize, ties: &[usize]) -> TestResult {
    let n = (na + nb) as f64;
    let mean = na as f64 * (n + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na as f64 * nb as f64 / 12.0 * ((n + 1.0) - tie_term);
    if !(var > 0.0) {
        return TestResult {
            test: TestKind::WilcoxonRankSum,
            statistic: w,
            p_value: 1.0,
            exact: false,
        };
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    TestResult {
        test: TestKind::WilcoxonRankSum,
        statistic: w,
        p_value: erfc(z / std::f64::consts::SQRT_2).min(1.0),
        exact: false,
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Student-t density with `nu` degrees of freedom.
pub fn t_density(x: f64, nu: f64) -> f64 {
    let log_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    (log_c - (nu + 1.0) / 2.0 * (x * x / nu).ln_1p()).exp()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-sided tail probability `P(|T| >= |t|)` from quadrature of the density.
///
/// For `|t| <= 1` the central mass is integrated directly; beyond that the
/// tail is mapped onto `(0, 1]` with `x = |t| / s`.
pub fn t_two_sided_p(t: f64, nu: f64, tol: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    if t <= 1.0 {
        let central = integrate(&|x| t_density(x, nu), 0.0, t, tol / 2.0);
        return (1.0 - 2.0 * central).clamp(0.0, 1.0);
    }
    let log_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    // f(t/s) t / s^2 = C t s^(nu-1) (s^2 + t^2/nu)^(-(nu+1)/2)
    let g = |s: f64| {
        let tail = (log_c - (nu + 1.0) / 2.0 * (s * s + t * t / nu).ln()).exp();
        t * s.powf(nu - 1.0) * tail
    };
    (2.0 * integrate(&g, 0.0, 1.0, tol / 2.0)).clamp(0.0, 1.0)
}

/// Welch's two-sided t-test. The p-value comes from adaptive quadrature of
/// the t density at absolute tolerance 1e-10.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::data("t-test needs at least two values per sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::data("t-test on non-finite values"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (statistic, p_value) = if ma == mb {
            (0.0, 1.0)
        } else {
            ((ma - mb).signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            test: TestKind::WelchT,
            statistic,
            p_value,
            exact: false,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TestResult {
        test: TestKind::WelchT,
        statistic: t,
        p_value: t_two_sided_p(t, df, 1e-10),
        exact: false,
    })
}
