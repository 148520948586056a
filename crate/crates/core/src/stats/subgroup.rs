//! Exploratory subgroup cuts of the deployed-cell paired risk difference.
//! Descriptive only: no multiplicity correction is applied and every
//! result is flagged as such.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::PairedStimulus;
use crate::rule::GovernancePoint;
use crate::stats::rd::{paired_rd, DiscordantCounts, RuleParams};

/// Which pair attribute defines the strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratifier {
    SignalWeight,
    Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub stratum: String,
    pub n_pairs: usize,
    pub counts: DiscordantCounts,
    pub rd: f64,
    pub mcnemar_p: f64,
    /// Always true: these cuts are descriptive, not confirmatory.
    pub exploratory: bool,
}

fn stratum_key(pair: &PairedStimulus, by: Stratifier) -> String {
    match by {
        Stratifier::SignalWeight => format!("w={:.2}", pair.signal_wt),
        Stratifier::Regime => pair
            .original
            .regime_label()
            .map(|r| r.to_string())
            .unwrap_or_else(|| "unknown".to_string()),
    }
}

/// Deployed-cell RD and exact McNemar per stratum, in sorted stratum
/// order.
pub fn subgroup_analysis(
    pairs: &[PairedStimulus],
    by: Stratifier,
    rule: &RuleParams,
) -> Result<Vec<SubgroupResult>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("subgroup_analysis needs pairs"));
    }
    let mut strata: BTreeMap<String, Vec<&PairedStimulus>> = BTreeMap::new();
    for pair in pairs {
        strata.entry(stratum_key(pair, by)).or_default().push(pair);
    }
    let deployed = GovernancePoint::deployed();
    strata
        .into_iter()
        .map(|(stratum, members)| {
            let owned: Vec<PairedStimulus> = members.into_iter().cloned().collect();
            let cell = paired_rd(&owned, &deployed, rule)?;
            Ok(SubgroupResult {
                stratum,
                n_pairs: owned.len(),
                counts: cell.counts,
                rd: cell.rd,
                mcnemar_p: cell.mcnemar_p(),
                exploratory: true,
            })
        })
        .collect()
}
