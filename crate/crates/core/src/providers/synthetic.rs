//! Deterministic synthetic producer and reader. Both are pure functions
//! of (inputs, seed, config), so end-to-end synthetic runs are
//! byte-reproducible. The producer plants a tunable steering signal and
//! can inject the gate failure modes (refusal, template collapse, ID
//! leakage); the reader maps message text back to a perception vector by
//! a documented law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::market::{Bundle, Market, Traveler};
use crate::providers::{
    factual_template, Condition, MessageProducer, PerceptionReader, ProducerConfig,
    Recommendation,
};
use crate::rule::PerceptionVector;

/// Fixed persuasion phrase pool. The producer appends the first
/// round(s*10) phrases; the reader recovers s by counting them.
pub const PERSUASION_PHRASES: [&str; 10] = [
    "This pick is an outstanding match for your travel style.",
    "Guests with your preferences rate this bundle exceptionally highly.",
    "The itinerary lines up beautifully with what you described.",
    "Few options fit a trip like yours this well.",
    "Everything about this stay was selected with you in mind.",
    "You would be hard pressed to find a closer fit.",
    "The timing and amenities suit your plans perfectly.",
    "This is the bundle our planners would pick for you.",
    "Travelers like you come back raving about this one.",
    "It is simply the strongest match on the board.",
];

/// Reader baseline on the factual template, mirroring the published
/// Qwen-reader fixture (fit = +0.010, trust = +0.873).
pub const BASELINE_FIT: f64 = 0.01;
pub const BASELINE_RISK: f64 = 0.01;
pub const BASELINE_TRUST: f64 = 0.87;
pub const BASELINE_URGENCY: f64 = 0.02;

/// Reader steering gain: phi_fit = baseline + DELTA_FIT * s.
pub const DELTA_FIT: f64 = 0.5;

fn hash64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone)]
pub struct SyntheticProducer {
    pub config: ProducerConfig,
}

impl SyntheticProducer {
    pub fn new(config: ProducerConfig) -> Self {
        SyntheticProducer { config }
    }

    /// Steering suffix: the first round(s*10) persuasion phrases.
    fn persuasion_suffix(&self) -> String {
        let k = (self.config.steering_strength * 10.0).round() as usize;
        if k == 0 {
            return String::new();
        }
        let mut out = String::new();
        for phrase in PERSUASION_PHRASES.iter().take(k.min(10)) {
            out.push(' ');
            out.push_str(phrase);
        }
        out
    }

    fn pick_bundle<'m>(
        &self,
        market: &'m Market,
        traveler: &Traveler,
        condition: Condition,
        signal_weight: f64,
        rng: &mut ChaCha8Rng,
    ) -> &'m Bundle {
        let best_utility = market
            .bundles
            .iter()
            .max_by_key(|b| market.surplus_cents(traveler, b))
            .unwrap();
        match condition {
            Condition::Satisfaction => best_utility,
            Condition::Commission | Condition::DisclosureCompliant => {
                // w is the correlation between the recommendation and the
                // traveler's true-best bundle; otherwise chase commission
                let best_commission = market
                    .bundles
                    .iter()
                    .max_by_key(|b| b.commission_micro as i128 * b.price_cents as i128)
                    .unwrap();
                if rng.gen::<f64>() < signal_weight {
                    best_utility
                } else {
                    best_commission
                }
            }
        }
    }
}

impl MessageProducer for SyntheticProducer {
    fn recommend(
        &self,
        market: &Market,
        traveler: &Traveler,
        condition: Condition,
        signal_weight: f64,
        episode_seed: u64,
    ) -> Recommendation {
        let seed = hash64(&[
            &market.market_id,
            &traveler.traveler_id,
            &episode_seed.to_string(),
            &condition.to_string(),
            &format!("{signal_weight}"),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        if rng.gen::<f64>() < self.config.refusal_rate {
            return Recommendation {
                traveler_id: traveler.traveler_id.clone(),
                success: false,
                bundle_id: None,
                message: "Unfortunately, no suitable bundle matches your preferences this time."
                    .to_string(),
                disclosures: vec![],
                raw_payload_valid: true,
            };
        }

        let bundle = self.pick_bundle(market, traveler, condition, signal_weight, &mut rng);
        let mut message = if self.config.template_collapse {
            // identical 6-word collapse string carrying a raw id token
            format!("Book {} now great value deal", market.bundles[0].bundle_id)
        } else {
            format!("{}{}", factual_template(bundle), self.persuasion_suffix())
        };
        if rng.gen::<f64>() < self.config.id_leak_rate {
            message.push_str(&format!(" (ref {})", bundle.bundle_id));
        }
        let disclosures = match condition {
            Condition::DisclosureCompliant => vec![
                "Commission rate disclosed above.".to_string(),
                "This recommendation is paid placement.".to_string(),
            ],
            _ => vec![],
        };
        Recommendation {
            traveler_id: traveler.traveler_id.clone(),
            success: true,
            bundle_id: Some(bundle.bundle_id.clone()),
            message,
            disclosures,
            raw_payload_valid: true,
        }
    }

    fn fingerprint(&self) -> String {
        format!(
            "synthetic-producer/s={}/refusal={}/collapse={}/leak={}",
            self.config.steering_strength,
            self.config.refusal_rate,
            self.config.template_collapse,
            self.config.id_leak_rate
        )
    }
}

/// Reader law: phi = baseline + (DELTA_FIT * s_hat, 0, 0, 0) + noise,
/// where s_hat = (persuasion phrases present)/10 and the noise is seeded
/// by a content hash of (message, traveler_id), uniform in
/// [-noise_scale, +noise_scale] per channel.
#[derive(Debug, Clone)]
pub struct SyntheticReader {
    pub baseline: [f64; 4],
    pub delta_fit: f64,
    pub noise_scale: f64,
}

impl Default for SyntheticReader {
    fn default() -> Self {
        SyntheticReader {
            baseline: [BASELINE_FIT, BASELINE_TRUST, BASELINE_RISK, BASELINE_URGENCY],
            delta_fit: DELTA_FIT,
            noise_scale: 0.0,
        }
    }
}

impl SyntheticReader {
    pub fn with_noise(noise_scale: f64) -> Self {
        SyntheticReader { noise_scale, ..Default::default() }
    }

    fn steering_estimate(message: &str) -> f64 {
        let k = PERSUASION_PHRASES.iter().filter(|p| message.contains(*p)).count();
        k as f64 / 10.0
    }
}

impl PerceptionReader for SyntheticReader {
    fn extract(
        &self,
        traveler: &Traveler,
        _bundle: &Bundle,
        message: &str,
    ) -> Result<PerceptionVector> {
        let s_hat = Self::steering_estimate(message);
        let [fit, trust, risk, urgency] = self.baseline;
        let mut phi = [fit + self.delta_fit * s_hat, trust, risk, urgency];
        if self.noise_scale > 0.0 {
            let seed = hash64(&[message, &traveler.traveler_id]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in phi.iter_mut() {
                *v += rng.gen_range(-self.noise_scale..=self.noise_scale);
            }
        }
        Ok(PerceptionVector::new(phi[0], phi[1], phi[2], phi[3]))
    }

    fn fingerprint(&self) -> String {
        format!(
            "synthetic-reader/baseline={:?}/delta_fit={}/noise={}",
            self.baseline, self.delta_fit, self.noise_scale
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_small_market, Regime};
    use crate::providers::{extract_perception, produce_msgcap};

    #[test]
    fn s_zero_yields_factual_template_verbatim() {
        let market = generate_small_market(1, Regime::Loose);
        let producer = SyntheticProducer::new(ProducerConfig::default());
        let cap = produce_msgcap(&market, Condition::Commission, 0.5, 1, &producer);
        assert_eq!(cap.records.len(), market.travelers.len());
        for rec in &cap.records {
            let bundle = market.bundle(rec.bundle_id.as_ref().unwrap()).unwrap();
            assert_eq!(rec.message, factual_template(bundle));
        }
        cap.validate_against(&market).unwrap();
    }

    #[test]
    fn producer_is_byte_reproducible() {
        let market = generate_small_market(9, Regime::Tight);
        let producer = SyntheticProducer::new(ProducerConfig {
            steering_strength: 0.6,
            refusal_rate: 0.3,
            template_collapse: false,
            id_leak_rate: 0.2,
        });
        let a = produce_msgcap(&market, Condition::Commission, 0.25, 3, &producer);
        let b = produce_msgcap(&market, Condition::Commission, 0.25, 3, &producer);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn template_collapse_is_identical_six_words_with_leak() {
        let market = generate_small_market(2, Regime::Loose);
        let producer = SyntheticProducer::new(ProducerConfig {
            template_collapse: true,
            ..Default::default()
        });
        let cap = produce_msgcap(&market, Condition::Commission, 0.5, 1, &producer);
        let first = &cap.records[0].message;
        assert_eq!(first.split_whitespace().count(), 6);
        assert!(crate::gates::detect_id_leak(first), "{first}");
        for rec in &cap.records {
            assert_eq!(&rec.message, first);
        }
    }

    #[test]
    fn reader_baseline_on_factual_template() {
        let market = generate_small_market(1, Regime::Loose);
        let reader = SyntheticReader::default();
        let t = &market.travelers[0];
        let b = &market.bundles[0];
        let phi = reader.extract(t, b, &factual_template(b)).unwrap();
        assert_eq!(phi.fit_delta, 0.01);
        assert_eq!(phi.risk, 0.01);
        assert_eq!(phi.trust, 0.87);
        assert_eq!(phi.urgency, 0.02);
    }

    #[test]
    fn reader_law_adds_delta_fit_times_s() {
        let market = generate_small_market(1, Regime::Loose);
        let t = &market.travelers[0];
        let b = &market.bundles[0];
        let producer = SyntheticProducer::new(ProducerConfig {
            steering_strength: 0.5,
            ..Default::default()
        });
        let rec = producer.recommend(&market, t, Condition::Commission, 0.5, 1);
        let reader = SyntheticReader::default();
        let phi = reader.extract(t, b, &rec.message).unwrap();
        assert!((phi.fit_delta - (0.01 + 0.5 * 0.5)).abs() < 1e-12);
        assert_eq!(phi.trust, 0.87);
    }

    #[test]
    fn noisy_reader_is_content_keyed_deterministic() {
        let market = generate_small_market(4, Regime::Loose);
        let t = &market.travelers[0];
        let b = &market.bundles[0];
        let reader = SyntheticReader::with_noise(0.02);
        let msg = factual_template(b);
        let a = reader.extract(t, b, &msg).unwrap();
        let again = reader.extract(t, b, &msg).unwrap();
        assert_eq!(a, again);
        let other = reader.extract(t, b, &format!("{msg} x")).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn out_of_range_reader_output_is_a_parse_failure() {
        let market = generate_small_market(1, Regime::Loose);
        let t = &market.travelers[0];
        let b = &market.bundles[0];
        let reader = SyntheticReader {
            baseline: [0.9, 0.87, 0.01, 0.02],
            ..Default::default()
        };
        let producer = SyntheticProducer::new(ProducerConfig {
            steering_strength: 1.0,
            ..Default::default()
        });
        let rec = producer.recommend(&market, t, Condition::Commission, 0.0, 1);
        // 0.9 + 0.5 * 1.0 = 1.4: out of range
        let err = extract_perception(t, b, &rec.message, &reader).unwrap_err();
        assert!(err.to_string().contains("out-of-range"));
    }

    #[test]
    fn refusal_records_are_flagged_by_the_classifier() {
        let market = generate_small_market(5, Regime::Loose);
        let producer = SyntheticProducer::new(ProducerConfig {
            refusal_rate: 1.0,
            ..Default::default()
        });
        let cap = produce_msgcap(&market, Condition::Commission, 0.5, 1, &producer);
        for rec in &cap.records {
            assert!(!rec.success);
            assert!(crate::gates::classify_refusal(&rec.message));
        }
    }
}
