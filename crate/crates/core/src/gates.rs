//! The symmetric six-gate producer-text audit: message statistics from a
//! msgcap, frozen thresholds, gate vector and verdict.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Market;
use crate::providers::Msgcap;

/// Frozen gate thresholds. Any override is recorded in the run manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateThresholds {
    pub json_validity_min: f64,
    pub bundle_coverage_min: f64,
    pub wc_median_min: f64,
    pub wc_median_max: f64,
    pub refusal_max: f64,
    pub unique_success_min: f64,
    pub id_leak_max: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            json_validity_min: 0.85,
            bundle_coverage_min: 0.80,
            wc_median_min: 10.0,
            wc_median_max: 200.0,
            refusal_max: 0.20,
            unique_success_min: 0.30,
            id_leak_max: 0.20,
        }
    }
}

/// Per-msgcap message statistics feeding the gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStats {
    pub json_validity: f64,
    /// Over success recommendations only; None when n_success = 0.
    pub bundle_coverage: Option<f64>,
    pub wc_median: f64,
    pub refusal_rate: f64,
    /// distinct(trimmed message)/n_success; None when n_success = 0.
    pub unique_success_ratio: Option<f64>,
    pub id_leak_rate: f64,
    pub n_calls: usize,
    pub n_success: usize,
}

/// Six pass/fail booleans plus the verdict string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVector {
    pub json_validity_pass: bool,
    pub bundle_coverage_pass: bool,
    pub wc_median_pass: bool,
    pub refusal_pass: bool,
    pub unique_success_pass: bool,
    pub id_leak_pass: bool,
    /// "PASS" or "FAIL: <abbrevs>" joined with '/' in gate order
    /// json/cov/wc/ref/uq/lk.
    pub verdict: String,
}

impl GateVector {
    pub fn all_pass(&self) -> bool {
        self.json_validity_pass
            && self.bundle_coverage_pass
            && self.wc_median_pass
            && self.refusal_pass
            && self.unique_success_pass
            && self.id_leak_pass
    }
}

/// v1 base refusal phrases. The published classifier names only the v2
/// additions; this base list is a documented stand-in shipped in config.
pub const REFUSAL_PATTERNS_V1: [&str; 6] =
    ["i cannot", "i can't", "i'm sorry", "as an ai", "i am unable", "i apologize"];

/// The 11 verbatim v2 additions.
pub const REFUSAL_PATTERNS_V2: [&str; 11] = [
    "unfortunately",
    "couldn't find",
    "could not find",
    "unable to find",
    "cannot find",
    "did not find",
    "no suitable",
    "not suitable",
    "no bundle matches",
    "does not match your",
    "doesn't match your",
];

/// Case-insensitive substring classifier over the v1 base list plus the
/// v2 additions plus any extra configured phrases.
#[derive(Debug, Clone)]
pub struct RefusalClassifier {
    patterns: Vec<String>,
}

impl Default for RefusalClassifier {
    fn default() -> Self {
        RefusalClassifier {
            patterns: REFUSAL_PATTERNS_V1
                .iter()
                .chain(REFUSAL_PATTERNS_V2.iter())
                .map(|p| p.to_string())
                .collect(),
        }
    }
}

impl RefusalClassifier {
    /// Default list plus extra phrases (one per line, '#' comments and
    /// blanks skipped). Lines already present are not duplicated.
    pub fn with_extra_patterns(extra: &str) -> Self {
        let mut out = Self::default();
        for line in extra.lines() {
            let line = line.trim().to_lowercase();
            if line.is_empty() || line.starts_with('#') || out.patterns.contains(&line) {
                continue;
            }
            out.patterns.push(line);
        }
        out
    }

    pub fn is_refusal(&self, message: &str) -> bool {
        let lower = message.to_lowercase();
        self.patterns.iter().any(|p| lower.contains(p.as_str()))
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

/// Default-list refusal check.
pub fn classify_refusal(message: &str) -> bool {
    static DEFAULT: Lazy<RefusalClassifier> = Lazy::new(RefusalClassifier::default);
    DEFAULT.is_refusal(message)
}

/// True iff a standalone t<digits> or b<digits> token appears. Word
/// boundaries on both ends: the raw published pattern would match inside
/// "b12x"; this anchoring is a documented deviation.
pub fn detect_id_leak(message: &str) -> bool {
    static LEAK: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b[bt]\d+\b").unwrap());
    LEAK.is_match(message)
}

/// Lower median for even counts (deterministic, documented).
fn lower_median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    values[(values.len() - 1) / 2] as f64
}

fn word_count(message: &str) -> usize {
    message.split_whitespace().count()
}

/// Message statistics over one msgcap against its market.
pub fn compute_msgcap_stats(
    msgcap: &Msgcap,
    market: &Market,
    refusal: &RefusalClassifier,
) -> Result<GateStats> {
    if msgcap.records.is_empty() {
        return Err(Error::EmptyInput("msgcap has zero records"));
    }
    let n_calls = msgcap.records.len();
    let successes: Vec<_> = msgcap.records.iter().filter(|r| r.success).collect();
    let n_success = successes.len();

    let json_valid = msgcap.records.iter().filter(|r| r.raw_payload_valid).count();
    let covered = successes
        .iter()
        .filter(|r| r.bundle_id.as_deref().is_some_and(|b| market.bundle(b).is_some()))
        .count();
    let refusals = msgcap.records.iter().filter(|r| refusal.is_refusal(&r.message)).count();
    let leaks = msgcap.records.iter().filter(|r| detect_id_leak(&r.message)).count();
    let mut unique: Vec<&str> = successes.iter().map(|r| r.message.trim()).collect();
    unique.sort_unstable();
    unique.dedup();
    let mut wcs: Vec<usize> = msgcap.records.iter().map(|r| word_count(&r.message)).collect();

    Ok(GateStats {
        json_validity: json_valid as f64 / n_calls as f64,
        bundle_coverage: (n_success > 0).then(|| covered as f64 / n_success as f64),
        wc_median: lower_median(&mut wcs),
        refusal_rate: refusals as f64 / n_calls as f64,
        unique_success_ratio: (n_success > 0).then(|| unique.len() as f64 / n_success as f64),
        id_leak_rate: leaks as f64 / n_calls as f64,
        n_calls,
        n_success,
    })
}

/// Apply thresholds (range-inclusive on the wc_median bounds). A missing
/// coverage/uniqueness statistic (n_success = 0) fails its gate: a
/// producer with no successes cannot demonstrate coverage.
pub fn evaluate_gates(stats: &GateStats, thresholds: &GateThresholds) -> GateVector {
    let json_validity_pass = stats.json_validity >= thresholds.json_validity_min;
    let bundle_coverage_pass =
        stats.bundle_coverage.is_some_and(|v| v >= thresholds.bundle_coverage_min);
    let wc_median_pass =
        stats.wc_median >= thresholds.wc_median_min && stats.wc_median <= thresholds.wc_median_max;
    let refusal_pass = stats.refusal_rate <= thresholds.refusal_max;
    let unique_success_pass =
        stats.unique_success_ratio.is_some_and(|v| v >= thresholds.unique_success_min);
    let id_leak_pass = stats.id_leak_rate <= thresholds.id_leak_max;

    let failed: Vec<&str> = [
        (json_validity_pass, "json"),
        (bundle_coverage_pass, "cov"),
        (wc_median_pass, "wc"),
        (refusal_pass, "ref"),
        (unique_success_pass, "uq"),
        (id_leak_pass, "lk"),
    ]
    .iter()
    .filter(|(pass, _)| !pass)
    .map(|&(_, abbrev)| abbrev)
    .collect();
    let verdict = if failed.is_empty() {
        "PASS".to_string()
    } else {
        format!("FAIL: {}", failed.join("/"))
    };
    GateVector {
        json_validity_pass,
        bundle_coverage_pass,
        wc_median_pass,
        refusal_pass,
        unique_success_pass,
        id_leak_pass,
        verdict,
    }
}

/// Markdown gate table in the published outcome-table layout.
pub fn render_gate_report(arm: &str, stats: &GateStats, vector: &GateVector) -> String {
    let pct = |v: f64| format!("{:.1}%", v * 100.0);
    let opt = |v: Option<f64>| v.map(pct).unwrap_or_else(|| "n/a".to_string());
    let mut out = String::new();
    out.push_str("| Arm | JSON | Bundle | wc | Refusal | Uniq | ID-leak | Verdict |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
        arm,
        pct(stats.json_validity),
        opt(stats.bundle_coverage),
        stats.wc_median,
        pct(stats.refusal_rate),
        opt(stats.unique_success_ratio),
        pct(stats.id_leak_rate),
        vector.verdict,
    ));
    out
}
