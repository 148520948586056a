//! Paired Wilcoxon signed-rank tests on per-channel perception deltas,
//! with Holm step-down correction across the four channels.

use serde::{Deserialize, Serialize};

use crate::pairing::PairedStimulus;
use crate::rule::Channel;

/// Standard normal CDF via Abramowitz-Stegun 7.1.26 (|err| < 1.5e-7).
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let e = poly * (-x * x).exp();
    if x >= 0.0 {
        e
    } else {
        2.0 - e
    }
}

/// Two-sided signed-rank test on paired deltas. Zero deltas are dropped;
/// ties get average ranks; the normal approximation carries the tie
/// variance correction and a 0.5 continuity correction. All-zero input
/// returns p = 1.
pub fn wilcoxon_signed_rank(deltas: &[f64]) -> (f64, f64) {
    let nonzero: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().partial_cmp(&nonzero[b].abs()).unwrap());

    // average ranks within tied |delta| runs, accumulating the tie sizes
    let mut ranks = vec![0.0f64; n];
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let w_plus: f64 =
        (0..n).filter(|&k| nonzero[k] > 0.0).map(|k| ranks[k]).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        // every delta tied at the same magnitude and sign split is moot
        return (w_plus, 1.0);
    }
    let diff = w_plus - mean;
    let z = (diff.abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * (1.0 - normal_cdf(z))).min(1.0);
    (w_plus, p)
}

/// Holm step-down adjustment. Monotone, capped at 1, returned in the
/// input order.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut adjusted = vec![0.0f64; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    adjusted
}

/// One channel's delta test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub channel: Channel,
    pub n_nonzero: usize,
    pub w_statistic: f64,
    pub median_delta: f64,
    pub p: f64,
    pub p_holm: f64,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Signed-rank test per perception channel on (original - factual)
/// deltas, Holm-corrected across the four channels.
pub fn holm_wilcoxon(pairs: &[PairedStimulus]) -> Vec<FeatureTest> {
    let delta = |p: &PairedStimulus, ch: Channel| match ch {
        Channel::Fit => p.original.phi.fit - p.factual.phi.fit,
        Channel::Trust => p.original.phi.trust - p.factual.phi.trust,
        Channel::Risk => p.original.phi.risk - p.factual.phi.risk,
        Channel::Urgency => p.original.phi.urgency - p.factual.phi.urgency,
    };
    let mut tests: Vec<FeatureTest> = Channel::ALL
        .iter()
        .map(|&ch| {
            let mut deltas: Vec<f64> = pairs.iter().map(|p| delta(p, ch)).collect();
            let (w, p) = wilcoxon_signed_rank(&deltas);
            FeatureTest {
                channel: ch,
                n_nonzero: deltas.iter().filter(|d| **d != 0.0).count(),
                w_statistic: w,
                median_delta: median(&mut deltas),
                p,
                p_holm: 0.0,
            }
        })
        .collect();
    let raw: Vec<f64> = tests.iter().map(|t| t.p).collect();
    for (t, adj) in tests.iter_mut().zip(holm_adjust(&raw)) {
        t.p_holm = adj;
    }
    tests
}
