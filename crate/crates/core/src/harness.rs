//! Synthetic test harness: planted-effect pair generators for power
//! studies, exchangeable-null generators for calibration checks, and an
//! end-to-end record synthesizer driving the provider pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::market::{Market, Regime};
use crate::pairing::{EpisodeRecord, PairedStimulus, Phi, Variant};
use crate::providers::synthetic::{
    BASELINE_FIT, BASELINE_RISK, BASELINE_TRUST, BASELINE_URGENCY, DELTA_FIT,
};
use crate::providers::{
    extract_perception, factual_template, produce_msgcap, Condition, MessageProducer,
    PerceptionReader,
};

/// Planted-effect generator knobs.
#[derive(Debug, Clone, Copy)]
pub struct PlantSpec {
    /// Steering strength s; the original arm's fit channel is shifted by
    /// DELTA_FIT * s. s = 0 gives exchangeable arms.
    pub steering_strength: f64,
    pub n_pairs: usize,
    pub pairs_per_cluster: usize,
    /// Uniform per-channel noise half-width, iid across arms.
    pub noise_scale: f64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            steering_strength: 0.0,
            n_pairs: 300,
            pairs_per_cluster: 3,
            noise_scale: 0.02,
        }
    }
}

fn noisy_phi(rng: &mut ChaCha8Rng, fit_shift: f64, noise: f64) -> Phi {
    let mut draw = |base: f64| {
        if noise > 0.0 {
            base + rng.gen_range(-noise..=noise)
        } else {
            base
        }
    };
    Phi {
        fit: draw(BASELINE_FIT) + fit_shift,
        risk: draw(BASELINE_RISK),
        trust: draw(BASELINE_TRUST),
        urgency: draw(BASELINE_URGENCY),
    }
}

/// Clustered synthetic pairs with baseline surplus uniform over the
/// diagnostic window and a planted single-channel (fit) steering shift
/// on the original arm. With steering_strength = 0 the two arms are iid
/// draws from the same law: exchangeable-null data.
pub fn planted_pairs(spec: &PlantSpec, seed: u64) -> Vec<PairedStimulus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget: i64 = 100_000;
    let tau = 0.05;
    let tau_b = 5_000i64;
    (0..spec.n_pairs)
        .map(|i| {
            let cluster = i / spec.pairs_per_cluster.max(1);
            let scenario_id = format!("market_loose_{cluster}");
            // uniform over [tau*b - 0.10b, tau*b + 0.05b]
            let surplus = rng.gen_range(tau_b - 10_000..=tau_b + 5_000);
            let phi_orig =
                noisy_phi(&mut rng, DELTA_FIT * spec.steering_strength, spec.noise_scale);
            let phi_fact = noisy_phi(&mut rng, 0.0, spec.noise_scale);
            let record = |variant, phi| EpisodeRecord {
                scenario_id: scenario_id.clone(),
                signal_wt: [0.25, 0.5, 0.75][i % 3],
                episode_seed: (i % 3) as u64 + 1,
                traveler_id: format!("t{}", i % 6 + 1),
                bundle_id: format!("b{}", i % 8 + 1),
                variant,
                message: String::new(),
                phi,
                baseline_surplus_cents: surplus,
                budget_cents: budget,
                tau,
                regime: Some(Regime::Loose),
            };
            let original = record(Variant::Original, phi_orig);
            let factual = record(Variant::Factual, phi_fact);
            PairedStimulus {
                scenario_id: scenario_id.clone(),
                signal_wt: [0.25, 0.5, 0.75][i % 3],
                episode_seed: (i % 3) as u64 + 1,
                traveler_id: format!("t{}", i % 6 + 1),
                bundle_id: format!("b{}", i % 8 + 1),
                scenario_cluster_id: scenario_id,
                original,
                factual,
            }
        })
        .collect()
}

/// Exchangeable-null pairs: both arms iid from the same perception law.
pub fn exchangeable_null_pairs(n_pairs: usize, seed: u64) -> Vec<PairedStimulus> {
    planted_pairs(
        &PlantSpec { steering_strength: 0.0, n_pairs, ..Default::default() },
        seed,
    )
}

/// Counts surfaced by the synthesizer for the parse gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SynthesisStats {
    pub reader_calls: usize,
    pub parse_failures: usize,
}

impl SynthesisStats {
    pub fn parse_success_rate(&self) -> f64 {
        if self.reader_calls == 0 {
            return 1.0;
        }
        (self.reader_calls - self.parse_failures) as f64 / self.reader_calls as f64
    }
}

/// Drive the provider pipeline end to end over a set of markets: produce
/// a msgcap per (market, w, episode_seed), build the factual variant of
/// every success recommendation, extract perceptions for both arms, and
/// emit raw episode records. Parse failures are counted, never dropped
/// silently: reader_calls = 2 * successes always holds.
pub fn synthesize_records(
    markets: &[Market],
    condition: Condition,
    signal_weights: &[f64],
    episode_seeds: &[u64],
    producer: &dyn MessageProducer,
    reader: &dyn PerceptionReader,
) -> Result<(Vec<EpisodeRecord>, SynthesisStats)> {
    let mut records = Vec::new();
    let mut stats = SynthesisStats::default();
    for market in markets {
        for &w in signal_weights {
            for &ep in episode_seeds {
                let cap = produce_msgcap(market, condition, w, ep, producer);
                for rec in cap.records.iter().filter(|r| r.success) {
                    let traveler = market.traveler(&rec.traveler_id).unwrap();
                    let bundle = market.bundle(rec.bundle_id.as_ref().unwrap()).unwrap();
                    let factual_message = factual_template(bundle);
                    let surplus = market.surplus_cents(traveler, bundle);
                    let mut emit = |variant, message: &str| {
                        stats.reader_calls += 1;
                        match extract_perception(traveler, bundle, message, reader) {
                            Ok(phi) => records.push(EpisodeRecord {
                                scenario_id: market.market_id.clone(),
                                signal_wt: w,
                                episode_seed: ep,
                                traveler_id: traveler.traveler_id.clone(),
                                bundle_id: bundle.bundle_id.clone(),
                                variant,
                                message: message.to_string(),
                                phi: Phi {
                                    fit: phi.fit_delta,
                                    risk: phi.risk,
                                    trust: phi.trust,
                                    urgency: phi.urgency,
                                },
                                baseline_surplus_cents: surplus,
                                budget_cents: traveler.budget_cents,
                                tau: crate::fixed::from_micro(traveler.tau_micro),
                                regime: Some(market.regime),
                            }),
                            Err(_) => stats.parse_failures += 1,
                        }
                    };
                    emit(Variant::Original, &rec.message);
                    emit(Variant::Factual, &factual_message);
                }
            }
        }
    }
    Ok((records, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::generate_small_market;
    use crate::providers::{ProducerConfig, SyntheticProducer, SyntheticReader};
    use crate::rule::GovernancePoint;
    use crate::stats::rd::{paired_rd, RuleParams};
    use crate::stats::mcnemar_exact;

    #[test]
    fn planted_pairs_are_deterministic_and_clustered() {
        let spec = PlantSpec { n_pairs: 30, ..Default::default() };
        let a = planted_pairs(&spec, 5);
        let b = planted_pairs(&spec, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_eq!(crate::pairing::cluster_count(&a), 10);
    }

    #[test]
    fn planted_effect_shows_up_at_the_deployed_point() {
        let spec = PlantSpec { steering_strength: 0.6, n_pairs: 300, ..Default::default() };
        let pairs = planted_pairs(&spec, 1);
        let cell =
            paired_rd(&pairs, &GovernancePoint::deployed(), &RuleParams::default()).unwrap();
        assert!(cell.counts.b > cell.counts.c + 5, "{:?}", cell.counts);
        assert!(mcnemar_exact(cell.counts.b, cell.counts.c) < 0.05);
    }

    #[test]
    fn null_pairs_show_no_systematic_effect() {
        let pairs = exchangeable_null_pairs(300, 2);
        let cell =
            paired_rd(&pairs, &GovernancePoint::deployed(), &RuleParams::default()).unwrap();
        // both arms iid: discordance is symmetric and sparse
        assert!(cell.counts.b + cell.counts.c < 40, "{:?}", cell.counts);
    }

    #[test]
    fn synthesize_records_accounts_for_every_reader_call() {
        let markets: Vec<Market> = (0..3).map(|s| generate_small_market(s, Regime::Loose)).collect();
        let producer = SyntheticProducer::new(ProducerConfig {
            steering_strength: 0.4,
            ..Default::default()
        });
        let reader = SyntheticReader::default();
        let (records, stats) =
            synthesize_records(&markets, Condition::Commission, &[0.5], &[1, 2], &producer, &reader)
                .unwrap();
        assert_eq!(records.len() + stats.parse_failures, stats.reader_calls);
        assert_eq!(stats.parse_failures, 0);
        assert_eq!(stats.parse_success_rate(), 1.0);
        // both variants present per success
        let originals = records.iter().filter(|r| r.variant == Variant::Original).count();
        assert_eq!(originals * 2, records.len());
    }
}
