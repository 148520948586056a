//! Confidence intervals for the paired risk difference. Primary: the
//! score interval for a difference of correlated proportions (Tango),
//! inverting the constrained-MLE score statistic. Cross-check: a seeded
//! multinomial percentile bootstrap.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stats::rd::DiscordantCounts;

/// Two-sided standard-normal quantile via inverse erf (Acklam-style
/// rational approximation, adequate at the 1e-9 level).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    // coefficients for the central and tail regions
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
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Score statistic for H0: p10 - p01 = delta, with the constrained MLE
/// of p01 from the quadratic stationarity condition.
fn score_z(b: f64, c: f64, n: f64, delta: f64) -> f64 {
    let a2 = 2.0 * n;
    let bq = delta * (2.0 * n - b + c) - (b + c);
    let cq = -c * delta * (1.0 - delta);
    let disc = (bq * bq - 4.0 * a2 * cq).max(0.0);
    let q = ((-bq + disc.sqrt()) / (2.0 * a2)).max(0.0);
    let var = n * (2.0 * q + delta * (1.0 - delta));
    if var <= 0.0 {
        // degenerate only at the boundary; sign by the numerator
        return (b - c - n * delta).signum() * f64::INFINITY;
    }
    (b - c - n * delta) / var.sqrt()
}

/// Score-based confidence interval for the paired risk difference
/// (b - c)/n at the given level. Always contains the point estimate.
pub fn rd_confidence_interval(counts: &DiscordantCounts, level: f64) -> Result<(f64, f64)> {
    if counts.n() == 0 {
        return Err(Error::EmptyInput("rd_confidence_interval needs n > 0"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig(format!("CI level {level} not in (0, 1)")));
    }
    let b = counts.b as f64;
    let c = counts.c as f64;
    let n = counts.n() as f64;
    let point = (b - c) / n;
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);

    // z(delta) is decreasing in delta; bisect each side
    let bisect = |mut lo: f64, mut hi: f64, target: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score_z(b, c, n, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let lower = bisect(-1.0, point, z);
    let upper = bisect(point, 1.0, -z);
    Ok((lower.min(point), upper.max(point)))
}

/// Seeded multinomial percentile bootstrap over the 2x2 pair table.
pub fn bootstrap_rd_ci(
    counts: &DiscordantCounts,
    level: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if counts.n() == 0 {
        return Err(Error::EmptyInput("bootstrap_rd_ci needs n > 0"));
    }
    let n = counts.n();
    let cum = [
        counts.b as f64 / n as f64,
        (counts.b + counts.c) as f64 / n as f64,
        (counts.b + counts.c + counts.n11) as f64 / n as f64,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rds: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let mut rb = 0i64;
            let mut rc = 0i64;
            for _ in 0..n {
                let u: f64 = rng.gen();
                if u < cum[0] {
                    rb += 1;
                } else if u < cum[1] {
                    rc += 1;
                }
            }
            (rb - rc) as f64 / n as f64
        })
        .collect();
    rds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    let idx = |q: f64| {
        let i = (q * (n_resamples - 1) as f64).round() as usize;
        rds[i.min(n_resamples - 1)]
    };
    Ok((idx(alpha), idx(1.0 - alpha)))
}
