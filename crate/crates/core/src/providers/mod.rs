//! Message production (OTA conditions plus the factual template) and
//! perception extraction, behind provider interfaces with deterministic
//! synthetic implementations and a client for an external inference
//! service.

pub mod remote;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{format_cents, format_micro_pct};
use crate::market::{Bundle, Market, Traveler};
use crate::rule::PerceptionVector;

pub use remote::{ChatTransport, FixtureTransport, HttpChatClient, RemoteReader};
pub use synthetic::{SyntheticProducer, SyntheticReader};

/// Producer objective condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Commission,
    Satisfaction,
    DisclosureCompliant,
}

impl Condition {
    /// The condition-specific objective block text.
    pub fn objective_block(self) -> &'static str {
        match self {
            Condition::Commission => "maximize platform commission",
            Condition::Satisfaction => "maximize traveler welfare",
            Condition::DisclosureCompliant => "mandatory disclosures block",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::Commission => write!(f, "commission"),
            Condition::Satisfaction => write!(f, "satisfaction"),
            Condition::DisclosureCompliant => write!(f, "disclosure_compliant"),
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "commission" => Ok(Condition::Commission),
            "satisfaction" => Ok(Condition::Satisfaction),
            "disclosure_compliant" | "disclosure" => Ok(Condition::DisclosureCompliant),
            other => Err(Error::InvalidConfig(format!("unknown condition: {other}"))),
        }
    }
}

/// One producer call's outcome for one traveler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub traveler_id: String,
    pub success: bool,
    /// Present whenever success is true.
    pub bundle_id: Option<String>,
    pub message: String,
    #[serde(default)]
    pub disclosures: Vec<String>,
    /// Whether the producer's structured output parsed.
    pub raw_payload_valid: bool,
}

/// A captured set of producer recommendations for one scenario/condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Msgcap {
    pub scenario_id: String,
    pub condition: Condition,
    /// Signal weight w, one of {0.25, 0.5, 0.75}.
    pub signal_weight: f64,
    pub episode_seed: u64,
    pub producer_fingerprint: String,
    pub records: Vec<Recommendation>,
}

impl Msgcap {
    /// Invariant check: every traveler_id and (present) bundle_id exists
    /// in the referenced market.
    pub fn validate_against(&self, market: &Market) -> Result<()> {
        for rec in &self.records {
            if market.traveler(&rec.traveler_id).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "msgcap references unknown traveler {}",
                    rec.traveler_id
                )));
            }
            if let Some(bid) = &rec.bundle_id {
                if market.bundle(bid).is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "msgcap references unknown bundle {bid}"
                    )));
                }
            }
            if rec.success && rec.bundle_id.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "success record for {} has no bundle_id",
                    rec.traveler_id
                )));
            }
        }
        Ok(())
    }
}

/// Synthetic producer knobs: planted steering strength plus failure-mode
/// injectors for gate fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProducerConfig {
    pub steering_strength: f64,
    pub refusal_rate: f64,
    pub template_collapse: bool,
    pub id_leak_rate: f64,
}

impl Default for ProducerConfig {
    fn default() -> Self {
        ProducerConfig {
            steering_strength: 0.0,
            refusal_rate: 0.0,
            template_collapse: false,
            id_leak_rate: 0.0,
        }
    }
}

impl ProducerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("steering_strength", self.steering_strength),
            ("refusal_rate", self.refusal_rate),
            ("id_leak_rate", self.id_leak_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Produces one recommendation per traveler under a condition objective.
pub trait MessageProducer {
    fn recommend(
        &self,
        market: &Market,
        traveler: &Traveler,
        condition: Condition,
        signal_weight: f64,
        episode_seed: u64,
    ) -> Recommendation;

    /// Stable identity string pinned in manifests.
    fn fingerprint(&self) -> String;
}

/// Extracts a perception vector from message text.
pub trait PerceptionReader {
    fn extract(
        &self,
        traveler: &Traveler,
        bundle: &Bundle,
        message: &str,
    ) -> Result<PerceptionVector>;

    fn fingerprint(&self) -> String;
}

/// The minimum-disclosure factual template, exactly:
/// "Recommend B. Total price: p. Commission rate: r%. Extras: E."
/// with the bundle's display name (never the raw id), currency price,
/// one-decimal percent, comma-joined extras, and "none" when empty.
pub fn factual_template(bundle: &Bundle) -> String {
    let extras = if bundle.extras.is_empty() {
        "none".to_string()
    } else {
        bundle.extras.join(", ")
    };
    format!(
        "Recommend {}. Total price: {}. Commission rate: {}%. Extras: {}.",
        bundle.display_name,
        format_cents(bundle.price_cents),
        format_micro_pct(bundle.commission_micro),
        extras
    )
}

/// One producer call per traveler; transport failures are recorded as
/// raw_payload_valid = false, never aborting the capture.
pub fn produce_msgcap(
    market: &Market,
    condition: Condition,
    signal_weight: f64,
    episode_seed: u64,
    producer: &dyn MessageProducer,
) -> Msgcap {
    let records = market
        .travelers
        .iter()
        .map(|t| producer.recommend(market, t, condition, signal_weight, episode_seed))
        .collect();
    Msgcap {
        scenario_id: market.market_id.clone(),
        condition,
        signal_weight,
        episode_seed,
        producer_fingerprint: producer.fingerprint(),
        records,
    }
}

/// Range-check wrapper: any reader output outside [-1, 1] is a
/// parse-failure, counted by the parse gate upstream.
pub fn extract_perception(
    traveler: &Traveler,
    bundle: &Bundle,
    message: &str,
    reader: &dyn PerceptionReader,
) -> Result<PerceptionVector> {
    let phi = reader.extract(traveler, bundle, message)?;
    phi.validate().map_err(|e| Error::ParseFailure {
        reason: crate::error::ParseFailureReason::OutOfRange,
        detail: e.to_string(),
    })?;
    Ok(phi)
}
