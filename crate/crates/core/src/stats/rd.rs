//! Paired risk difference per governance cell, discordant counts, and
//! regime classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::PairedStimulus;
use crate::rule::{clip_binds, GovernancePoint, RuleCoefficients, DEPLOYED_FLOOR_MICRO};
use crate::stats::mcnemar_exact;

/// The frozen rule inputs shared by every cell evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleParams {
    pub coefficients: RuleCoefficients,
    pub floor_micro: i64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            coefficients: RuleCoefficients::deployed(),
            floor_micro: DEPLOYED_FLOOR_MICRO,
        }
    }
}

/// 2x2 paired outcome counts. b: original accepts / factual rejects,
/// c: original rejects / factual accepts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscordantCounts {
    pub b: u64,
    pub c: u64,
    pub n11: u64,
    pub n00: u64,
}

impl DiscordantCounts {
    pub fn n(&self) -> u64 {
        self.b + self.c + self.n11 + self.n00
    }

    /// (b - c) / n.
    pub fn rd(&self) -> f64 {
        (self.b as f64 - self.c as f64) / self.n() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    /// Significant transmission (McNemar p < 0.05).
    Live,
    /// Positive RD short of significance.
    Attenuated,
    /// No positive signal.
    NullOther,
    /// Validity-excluded (factual arm at ceiling or parse breach).
    Saturated,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeLabel::Live => write!(f, "live"),
            RegimeLabel::Attenuated => write!(f, "attenuated"),
            RegimeLabel::NullOther => write!(f, "null/other"),
            RegimeLabel::Saturated => write!(f, "saturated"),
        }
    }
}

/// One governance cell's paired evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub governance: GovernancePoint,
    pub counts: DiscordantCounts,
    pub rd: f64,
    /// Fraction of the 2n evaluations where the clip binds.
    pub clip_rate: f64,
    pub orig_accept_rate: f64,
    pub fact_accept_rate: f64,
    pub validity_excluded: bool,
    pub regime: Option<RegimeLabel>,
}

impl CellResult {
    pub fn mcnemar_p(&self) -> f64 {
        mcnemar_exact(self.counts.b, self.counts.c)
    }

    pub fn rd_pp(&self) -> f64 {
        self.rd * 100.0
    }
}

/// Re-score frozen perception vectors for both variants of every pair at
/// one governance point. No provider calls; pure re-scoring.
pub fn paired_rd(
    pairs: &[PairedStimulus],
    governance: &GovernancePoint,
    rule: &RuleParams,
) -> Result<CellResult> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("paired_rd needs at least one pair"));
    }
    let mut counts = DiscordantCounts::default();
    let mut orig_accepts = 0u64;
    let mut fact_accepts = 0u64;
    let mut binds = 0u64;
    for pair in pairs {
        let a_orig = pair.original.accept_at(&rule.coefficients, governance, rule.floor_micro);
        let a_fact = pair.factual.accept_at(&rule.coefficients, governance, rule.floor_micro);
        match (a_orig, a_fact) {
            (true, true) => counts.n11 += 1,
            (true, false) => counts.b += 1,
            (false, true) => counts.c += 1,
            (false, false) => counts.n00 += 1,
        }
        orig_accepts += a_orig as u64;
        fact_accepts += a_fact as u64;
        binds += clip_binds(&pair.original.perception(), &rule.coefficients, governance) as u64;
        binds += clip_binds(&pair.factual.perception(), &rule.coefficients, governance) as u64;
    }
    let n = pairs.len() as f64;
    Ok(CellResult {
        governance: *governance,
        counts,
        rd: counts.rd(),
        clip_rate: binds as f64 / (2.0 * n),
        orig_accept_rate: orig_accepts as f64 / n,
        fact_accept_rate: fact_accepts as f64 / n,
        validity_excluded: false,
        regime: None,
    })
}

/// Validity-exclusion thresholds from the frozen protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityThresholds {
    /// Factual acceptance at or above this rate is ceiling-saturated.
    pub fact_accept_ceiling: f64,
    /// Parse success below this rate breaches the validity gate.
    pub parse_success_min: f64,
}

impl Default for ValidityThresholds {
    fn default() -> Self {
        ValidityThresholds { fact_accept_ceiling: 0.98, parse_success_min: 0.95 }
    }
}

/// Stamp exclusion flags and diagnostic regime labels on computed cells.
/// Labels are metadata only; they feed no inference.
pub fn classify_regimes(
    cells: &mut [CellResult],
    parse_success_rate: f64,
    thresholds: &ValidityThresholds,
) {
    for cell in cells {
        cell.validity_excluded = cell.fact_accept_rate >= thresholds.fact_accept_ceiling
            || parse_success_rate < thresholds.parse_success_min;
        cell.regime = Some(if cell.validity_excluded {
            RegimeLabel::Saturated
        } else if cell.mcnemar_p() < 0.05 {
            RegimeLabel::Live
        } else if cell.rd > 0.0 {
            RegimeLabel::Attenuated
        } else {
            RegimeLabel::NullOther
        });
    }
}
