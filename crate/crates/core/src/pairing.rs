//! Near-threshold window selection, stratified sampling, and pairing of
//! original-vs-factual episode records into the audit sample.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{to_micro, Cents, MICRO};
use crate::market::Regime;
use crate::rule::{accept, EconomicState, GovernancePoint, PerceptionVector, RuleCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Factual,
}

/// Perception components in the released-log field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub fit: f64,
    pub risk: f64,
    pub trust: f64,
    pub urgency: f64,
}

/// One traveler evaluation of one message variant, in the shape of the
/// released raw JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario_id: String,
    pub signal_wt: f64,
    pub episode_seed: u64,
    pub traveler_id: String,
    pub bundle_id: String,
    pub variant: Variant,
    pub message: String,
    pub phi: Phi,
    pub baseline_surplus_cents: Cents,
    pub budget_cents: Cents,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
}

impl EpisodeRecord {
    pub fn perception(&self) -> PerceptionVector {
        PerceptionVector::new(self.phi.fit, self.phi.trust, self.phi.risk, self.phi.urgency)
    }

    pub fn tau_micro(&self) -> i64 {
        to_micro(self.tau)
    }

    pub fn economic_state(&self, floor_micro: i64) -> EconomicState {
        EconomicState {
            utility_cents: self.baseline_surplus_cents,
            price_cents: 0,
            budget_cents: self.budget_cents,
            tau_micro: self.tau_micro(),
            floor_micro,
        }
    }

    /// Welfare-rule decision for this record at a governance point.
    pub fn accept_at(
        &self,
        c: &RuleCoefficients,
        g: &GovernancePoint,
        floor_micro: i64,
    ) -> bool {
        accept(&self.perception(), &self.economic_state(floor_micro), c, g)
    }

    /// Regime label, either carried on the record or recovered from the
    /// scenario id convention `market_<regime>_<seed>`.
    pub fn regime_label(&self) -> Option<Regime> {
        self.regime.or_else(|| {
            let mid = self.scenario_id.split('_').nth(1)?;
            mid.parse().ok()
        })
    }

    fn key5(&self) -> (String, i64, u64, String, String) {
        (
            self.scenario_id.clone(),
            to_micro(self.signal_wt),
            self.episode_seed,
            self.traveler_id.clone(),
            self.bundle_id.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    #[default]
    Tuple3,
    Tuple5,
}

impl std::str::FromStr for PairingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tuple3" => Ok(PairingMode::Tuple3),
            "tuple5" => Ok(PairingMode::Tuple5),
            other => Err(Error::InvalidConfig(format!("unknown pairing mode: {other}"))),
        }
    }
}

/// One original/factual pair sharing a stimulus key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStimulus {
    pub scenario_id: String,
    pub signal_wt: f64,
    pub episode_seed: u64,
    pub traveler_id: String,
    pub bundle_id: String,
    pub scenario_cluster_id: String,
    pub original: EpisodeRecord,
    pub factual: EpisodeRecord,
}

/// Counts surfaced in the run manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub pairs: usize,
    pub singletons_dropped: usize,
    pub realizations_collapsed: usize,
    pub duplicates_deduped: usize,
}

/// Near-threshold window bounds (signed fractions of budget relative to
/// tau*b) plus stratified-sampling knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lower_micro: i64,
    pub upper_micro: i64,
    pub per_stratum_target: usize,
    pub per_stratum_cap: Option<usize>,
    pub sample_seed: u64,
}

impl WindowSpec {
    /// The diagnostic window: [tau*b - 0.10b, tau*b + 0.05b], target 100
    /// per stratum, seed 42.
    pub fn diagnostic() -> Self {
        WindowSpec {
            lower_micro: -100_000,
            upper_micro: 50_000,
            per_stratum_target: 100,
            per_stratum_cap: None,
            sample_seed: 42,
        }
    }
}

/// Closed-interval window check:
/// tau*b + lower*b <= baseline_surplus <= tau*b + upper*b.
pub fn in_window(record: &EpisodeRecord, spec: &WindowSpec) -> bool {
    surplus_in_window(
        record.baseline_surplus_cents,
        record.budget_cents,
        record.tau_micro(),
        spec,
    )
}

pub fn surplus_in_window(
    surplus_cents: Cents,
    budget_cents: Cents,
    tau_micro: i64,
    spec: &WindowSpec,
) -> bool {
    let s = surplus_cents as i128 * MICRO as i128;
    let lo = (tau_micro + spec.lower_micro) as i128 * budget_cents as i128;
    let hi = (tau_micro + spec.upper_micro) as i128 * budget_cents as i128;
    lo <= s && s <= hi
}

/// Within each (signal weight, regime) stratum, up to
/// min(target, cap, available) items chosen by seeded shuffle;
/// deterministic given sample_seed; output in stable input order.
pub fn stratified_sample<T>(
    items: Vec<T>,
    spec: &WindowSpec,
    stratum: impl Fn(&T) -> (i64, Regime),
) -> Vec<T> {
    let limit = spec.per_stratum_cap.map_or(spec.per_stratum_target, |cap| {
        spec.per_stratum_target.min(cap)
    });
    // group input indices by stratum, in first-appearance order
    let mut order: Vec<(i64, Regime)> = Vec::new();
    let mut groups: HashMap<(i64, Regime), Vec<usize>> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        let key = stratum(item);
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).unwrap().push(i);
    }
    let mut keep = vec![false; items.len()];
    for key in order {
        let mut idxs = groups.remove(&key).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.sample_seed
                ^ (key.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                ^ match key.1 {
                    Regime::Loose => 0x5bd1,
                    Regime::Tight => 0xc2b2,
                },
        );
        idxs.shuffle(&mut rng);
        for &i in idxs.iter().take(limit) {
            keep[i] = true;
        }
    }
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, item)| keep[i].then_some(item))
        .collect()
}

/// Pair originals with factuals. In tuple3 mode, when several
/// (signal_wt, episode_seed) realizations share a 3-tuple key only the
/// last realization in stable input order is retained; in tuple5 mode
/// every full-identity pair is kept. Unpaired singletons are dropped and
/// counted. Two records with identical key, same variant, and differing
/// content are an integrity error.
pub fn pair_up(
    records: &[EpisodeRecord],
    mode: PairingMode,
) -> Result<(Vec<PairedStimulus>, PairStats)> {
    let mut stats = PairStats::default();

    // collect realizations (5-tuple groups) in stable input order
    let mut realization_order: Vec<(String, i64, u64, String, String)> = Vec::new();
    let mut realizations: HashMap<
        (String, i64, u64, String, String),
        (Option<EpisodeRecord>, Option<EpisodeRecord>),
    > = HashMap::new();
    for rec in records {
        let key = rec.key5();
        let slot = realizations.entry(key.clone()).or_insert_with(|| {
            realization_order.push(key.clone());
            (None, None)
        });
        let side = match rec.variant {
            Variant::Original => &mut slot.0,
            Variant::Factual => &mut slot.1,
        };
        match side {
            Some(existing) if existing == rec => stats.duplicates_deduped += 1,
            Some(_) => {
                return Err(Error::DuplicateCapture(format!(
                    "{}/{}/{}/{}/{} {:?}",
                    rec.scenario_id,
                    rec.signal_wt,
                    rec.episode_seed,
                    rec.traveler_id,
                    rec.bundle_id,
                    rec.variant
                )))
            }
            None => *side = Some(rec.clone()),
        }
    }

    let selected: Vec<(String, i64, u64, String, String)> = match mode {
        PairingMode::Tuple5 => realization_order,
        PairingMode::Tuple3 => {
            // keep the last realization per 3-tuple in input order
            let mut last: HashMap<(String, String, String), usize> = HashMap::new();
            let mut key3_order: Vec<(String, String, String)> = Vec::new();
            for (i, key5) in realization_order.iter().enumerate() {
                let key3 = (key5.0.clone(), key5.3.clone(), key5.4.clone());
                if last.insert(key3.clone(), i).is_none() {
                    key3_order.push(key3);
                } else {
                    stats.realizations_collapsed += 1;
                }
            }
            key3_order
                .into_iter()
                .map(|key3| realization_order[last[&key3]].clone())
                .collect()
        }
    };

    let mut pairs = Vec::new();
    for key in selected {
        let (orig, fact) = realizations.remove(&key).unwrap();
        match (orig, fact) {
            (Some(original), Some(factual)) => {
                pairs.push(PairedStimulus {
                    scenario_id: key.0.clone(),
                    signal_wt: original.signal_wt,
                    episode_seed: key.2,
                    traveler_id: key.3.clone(),
                    bundle_id: key.4.clone(),
                    scenario_cluster_id: key.0.clone(),
                    original,
                    factual,
                });
            }
            _ => stats.singletons_dropped += 1,
        }
    }
    stats.pairs = pairs.len();
    Ok((pairs, stats))
}

/// Cluster id = scenario id; all pairs from one scenario share a cluster.
pub fn assign_clusters(pairs: &mut [PairedStimulus]) {
    for p in pairs {
        p.scenario_cluster_id = p.scenario_id.clone();
    }
}

pub fn cluster_count(pairs: &[PairedStimulus]) -> usize {
    let mut ids: Vec<&str> = pairs.iter().map(|p| p.scenario_cluster_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}
