//! End-to-end audit orchestration, run manifests, the compliance report,
//! and input verification.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::error::{Error, Result};
use crate::gates::GateVector;
use crate::io::{sha256_hex, verify_checksum, ChecksumStatus};
use crate::market::Regime;
use crate::pairing::{
    assign_clusters, cluster_count, in_window, pair_up, stratified_sample, EpisodeRecord,
    PairStats, PairedStimulus,
};
use crate::stats::rd::paired_rd;
use crate::stats::{
    cluster_max_stat_permutation, holm_wilcoxon, mcnemar_exact, rd_confidence_interval,
    subgroup_analysis, CellResult, DiscordantCounts, FeatureTest, PermutationResult,
    PermutationScheme, Stratifier, SubgroupResult,
};
use crate::sweep::{attribution_sweep, run_grid, AttributionResult};

/// The primary reading: the paired steering delta at the deployed point
/// with its two significance tests and the producer gate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReading {
    pub delta_acc: f64,
    pub counts: DiscordantCounts,
    pub n: usize,
    pub mcnemar_p: f64,
    pub permutation_p: f64,
    pub permutation_p_display: String,
    pub ci95: (f64, f64),
    pub gate_vector: Option<GateVector>,
    pub lambda: f64,
    pub kappa: f64,
    /// False when a validity gate breached; the reading is then stamped
    /// INVALID with the breached gate named.
    pub valid: bool,
    pub invalid_reason: Option<String>,
    pub manifest_hash: String,
}

impl AuditReading {
    pub fn delta_pp(&self) -> f64 {
        self.delta_acc * 100.0
    }
}

/// Everything pinned for reproduction; its hash is printed in every
/// report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub sample_seed: u64,
    pub permutation_seed: u64,
    pub n_perm: usize,
    pub window_lower_micro: i64,
    pub window_upper_micro: i64,
    pub pairing_mode: String,
    pub sampling_applied: bool,
    pub grid_lambdas: Vec<f64>,
    pub grid_kappas: Vec<f64>,
    pub config_hash: String,
    pub provider_fingerprints: Vec<String>,
    pub input_checksums: BTreeMap<String, String>,
    pub pair_stats: PairStats,
    pub n_clusters: usize,
    pub parse_success_rate: f64,
}

impl RunManifest {
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }
}

/// Full output of one audit run: the reading plus every diagnostic that
/// the report renders (no report-only numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub reading: AuditReading,
    pub cells: Vec<CellResult>,
    pub permutation: PermutationResult,
    pub attribution: Vec<AttributionResult>,
    pub feature_tests: Vec<FeatureTest>,
    pub subgroups: Vec<SubgroupResult>,
    pub manifest: RunManifest,
}

/// Replay knobs beyond the frozen config.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Apply the near-threshold window filter (ingested released data is
    /// already filtered; re-applying is idempotent).
    pub apply_window: bool,
    /// Apply per-stratum sampling; disabled when replaying a frozen
    /// sample.
    pub apply_sampling: bool,
    /// Fraction of reader calls that parsed; 1.0 for pure re-scoring.
    pub parse_success_rate: f64,
    pub provider_fingerprints: Vec<String>,
    pub input_checksums: BTreeMap<String, String>,
    pub gate_vector: Option<GateVector>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            apply_window: true,
            apply_sampling: false,
            parse_success_rate: 1.0,
            provider_fingerprints: vec![],
            input_checksums: BTreeMap::new(),
            gate_vector: None,
        }
    }
}

/// Pair raw episode records per the configured pipeline: window filter,
/// optional stratified sampling, pair-up, cluster assignment.
pub fn build_pairs(
    records: &[EpisodeRecord],
    config: &AuditConfig,
    options: &RunOptions,
) -> Result<(Vec<PairedStimulus>, PairStats)> {
    let window = config.window.spec();
    let filtered: Vec<EpisodeRecord> = if options.apply_window {
        records.iter().filter(|r| in_window(r, &window)).cloned().collect()
    } else {
        records.to_vec()
    };
    if filtered.is_empty() {
        return Err(Error::EmptyInput("no records inside the near-threshold window"));
    }
    let (mut pairs, stats) = pair_up(&filtered, config.pairing)?;
    if options.apply_sampling {
        pairs = stratified_sample(pairs, &window, |p: &PairedStimulus| {
            (
                crate::fixed::to_micro(p.signal_wt),
                p.original.regime_label().unwrap_or(Regime::Loose),
            )
        });
    }
    assign_clusters(&mut pairs);
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairing produced no pairs"));
    }
    Ok((pairs, stats))
}

/// Score a frozen pair set end to end: deployed-point reading, grid,
/// permutation, attribution, feature tests, subgroups, manifest.
pub fn run_audit(
    records: &[EpisodeRecord],
    config: &AuditConfig,
    options: &RunOptions,
) -> Result<AuditOutput> {
    let (pairs, pair_stats) = build_pairs(records, config, options)?;
    let rule = config.rule.rule_params();
    let deployed = config.rule.deployed_point();
    let thresholds = config.stats.validity_thresholds();

    let deployed_cell = paired_rd(&pairs, &deployed, &rule)?;
    let cells = run_grid(&pairs, &config.grid, &rule, options.parse_success_rate, &thresholds)?;
    let scheme = if config.stats.exhaustive {
        PermutationScheme::Exhaustive
    } else {
        PermutationScheme::MonteCarlo {
            n_perm: config.stats.n_perm,
            seed: config.stats.perm_seed,
        }
    };
    // when every cell is validity-excluded the run still completes (the
    // reading is stamped INVALID below); permute over the full grid as a
    // diagnostic with a warning attached
    let all_excluded = cells.iter().all(|c| c.validity_excluded);
    let perm_cells: Vec<CellResult> = if all_excluded {
        cells
            .iter()
            .map(|c| CellResult { validity_excluded: false, ..c.clone() })
            .collect()
    } else {
        cells.clone()
    };
    let mut permutation =
        cluster_max_stat_permutation(&pairs, &perm_cells, &rule, scheme, config.stats.flip_mode)?;
    if all_excluded {
        permutation.warning = Some(
            "every grid cell is validity-excluded; permutation ran over the full grid \
             as a diagnostic"
                .to_string(),
        );
    }
    let attribution =
        attribution_sweep(&pairs, &config.grid, &rule, options.parse_success_rate, &thresholds)?;
    let feature_tests = holm_wilcoxon(&pairs);
    let subgroups = subgroup_analysis(&pairs, Stratifier::SignalWeight, &rule)?;
    let ci95 = rd_confidence_interval(&deployed_cell.counts, config.stats.ci_level)?;

    let manifest = RunManifest {
        sample_seed: config.window.sample_seed,
        permutation_seed: config.stats.perm_seed,
        n_perm: permutation.n_perm,
        window_lower_micro: config.window.spec().lower_micro,
        window_upper_micro: config.window.spec().upper_micro,
        pairing_mode: format!("{:?}", config.pairing).to_lowercase(),
        sampling_applied: options.apply_sampling,
        grid_lambdas: config.grid.lambdas.clone(),
        grid_kappas: config.grid.kappas.clone(),
        config_hash: config.hash(),
        provider_fingerprints: options.provider_fingerprints.clone(),
        input_checksums: options.input_checksums.clone(),
        pair_stats,
        n_clusters: cluster_count(&pairs),
        parse_success_rate: options.parse_success_rate,
    };

    let breached = options.parse_success_rate < config.stats.parse_success_min;
    let reading = AuditReading {
        delta_acc: deployed_cell.rd,
        counts: deployed_cell.counts,
        n: pairs.len(),
        mcnemar_p: mcnemar_exact(deployed_cell.counts.b, deployed_cell.counts.c),
        permutation_p: permutation.p,
        permutation_p_display: permutation.display_p(),
        ci95,
        gate_vector: options.gate_vector.clone(),
        lambda: deployed.lambda(),
        kappa: deployed.kappa(),
        valid: !breached,
        invalid_reason: breached.then(|| {
            format!(
                "parse-success validity gate breached: {:.1}% < {:.0}%",
                options.parse_success_rate * 100.0,
                config.stats.parse_success_min * 100.0
            )
        }),
        manifest_hash: manifest.hash(),
    };
    Ok(AuditOutput {
        reading,
        cells,
        permutation,
        attribution,
        feature_tests,
        subgroups,
        manifest,
    })
}

/// Markdown compliance report. Every number rendered here also appears
/// in the machine-readable AuditOutput JSON sibling.
pub fn render_report(output: &AuditOutput) -> String {
    let r = &output.reading;
    let mut doc = String::new();
    if !r.valid {
        doc.push_str(&format!(
            "**INVALID READING** — {}\n\n",
            r.invalid_reason.as_deref().unwrap_or("validity gate breached")
        ));
    }
    doc.push_str(&format!(
        "At (λ={}, κ={}), this deployment produces {:+.2}pp paired steering under the \
         hardened welfare rule — {:.1} extra commission-steered recommendations per 100 \
         paired traveler sessions (exact McNemar p = {:.4}, n = {}).\n\n",
        r.lambda,
        r.kappa,
        r.delta_pp(),
        r.delta_pp(),
        r.mcnemar_p,
        r.n
    ));

    doc.push_str("## Primary endpoint\n\n");
    doc.push_str("| n | acc orig | acc fact | Δ_acc | b/c | McNemar p | 95% CI | perm p |\n");
    doc.push_str("|---|---|---|---|---|---|---|---|\n");
    let deployed = output
        .cells
        .iter()
        .find(|c| c.governance == crate::rule::GovernancePoint::deployed());
    let (orig_rate, fact_rate) = deployed
        .map(|c| (c.orig_accept_rate, c.fact_accept_rate))
        .unwrap_or((f64::NAN, f64::NAN));
    doc.push_str(&format!(
        "| {} | {:.2}% | {:.2}% | {:+.2}pp | {}/{} | {:.4} | [{:+.2}, {:+.2}]pp | {} |\n\n",
        r.n,
        orig_rate * 100.0,
        fact_rate * 100.0,
        r.delta_pp(),
        r.counts.b,
        r.counts.c,
        r.mcnemar_p,
        r.ci95.0 * 100.0,
        r.ci95.1 * 100.0,
        r.permutation_p_display,
    ));

    doc.push_str("## Permutation summary\n\n");
    doc.push_str(&format!(
        "Scenario-clustered max-stat permutation over {} non-excluded cells: observed \
         max RD {:+.2}pp, p = {} ({} permutations, seed {:?}).\n\n",
        output.cells.iter().filter(|c| !c.validity_excluded).count(),
        output.permutation.observed_max_rd * 100.0,
        output.permutation.display_p(),
        output.permutation.n_perm,
        output.permutation.perm_seed,
    ));

    if let Some(gv) = &r.gate_vector {
        doc.push_str("## Producer gates\n\n");
        doc.push_str(&format!("Verdict: **{}**\n\n", gv.verdict));
    }

    doc.push_str("## Diagnostics (exploratory)\n\n");
    doc.push_str(&format!(
        "Rule-level attribution ({}):\n\n",
        crate::sweep::ATTRIBUTION_LABEL
    ));
    for a in &output.attribution {
        doc.push_str(&format!(
            "- zeroing {}: max RD {:+.2}pp → {:+.2}pp\n",
            a.channel.name(),
            a.baseline_max_rd * 100.0,
            a.zeroed_max_rd * 100.0
        ));
    }
    doc.push('\n');
    if !output.subgroups.is_empty() {
        doc.push_str("Subgroups (exploratory):\n\n");
        for s in &output.subgroups {
            doc.push_str(&format!(
                "- {}: n={}, {:+.2}pp, b/c {}/{}, p={:.4}\n",
                s.stratum,
                s.n_pairs,
                s.rd * 100.0,
                s.counts.b,
                s.counts.c,
                s.mcnemar_p
            ));
        }
        doc.push('\n');
    }
    let mut regimes: BTreeMap<String, usize> = BTreeMap::new();
    for cell in &output.cells {
        if let Some(label) = cell.regime {
            *regimes.entry(label.to_string()).or_default() += 1;
        }
    }
    doc.push_str("Grid regime labels (diagnostic metadata): ");
    doc.push_str(
        &regimes
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    doc.push_str("\n\n");
    doc.push_str(&format!("Manifest hash: `{}`\n", r.manifest_hash));
    doc
}

/// Recompute and compare checksums; one line per input.
pub fn verify_inputs(expected: &BTreeMap<String, String>, base: &Path) -> Vec<(String, ChecksumStatus)> {
    expected
        .iter()
        .map(|(rel, sum)| (rel.clone(), verify_checksum(&base.join(rel), sum)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{exchangeable_null_pairs, planted_pairs, PlantSpec};
    use crate::pairing::Variant;

    fn records_from_pairs(pairs: &[PairedStimulus]) -> Vec<EpisodeRecord> {
        pairs
            .iter()
            .flat_map(|p| [p.original.clone(), p.factual.clone()])
            .collect()
    }

    fn fast_config() -> AuditConfig {
        let mut config = AuditConfig::default();
        config.stats.n_perm = 200;
        config
    }

    #[test]
    fn null_run_reads_zero_and_valid() {
        let pairs = planted_pairs(
            &PlantSpec { steering_strength: 0.0, n_pairs: 60, noise_scale: 0.0, ..Default::default() },
            3,
        );
        let records = records_from_pairs(&pairs);
        let out = run_audit(&records, &fast_config(), &RunOptions::default()).unwrap();
        assert_eq!(out.reading.delta_acc, 0.0);
        assert_eq!(out.reading.mcnemar_p, 1.0);
        assert!(out.reading.valid);
        assert_eq!(out.reading.n, 60);
        let doc = render_report(&out);
        assert!(doc.contains("(λ=1, κ=0.05)"));
        assert!(doc.contains("per 100 paired traveler sessions"));
        assert!(doc.contains(&out.reading.manifest_hash));
    }

    #[test]
    fn planted_run_detects_and_the_report_quotes_it() {
        let pairs = planted_pairs(
            &PlantSpec { steering_strength: 0.6, n_pairs: 300, ..Default::default() },
            7,
        );
        let records = records_from_pairs(&pairs);
        let out = run_audit(&records, &fast_config(), &RunOptions::default()).unwrap();
        assert!(out.reading.delta_acc > 0.0);
        assert!(out.reading.mcnemar_p < 0.05);
        assert!(out.reading.permutation_p < 0.05);
        let doc = render_report(&out);
        assert!(doc.contains(&format!("{:+.2}pp", out.reading.delta_pp())));
        assert!(doc.contains(crate::sweep::ATTRIBUTION_LABEL));
    }

    #[test]
    fn parse_gate_breach_stamps_invalid() {
        let pairs = exchangeable_null_pairs(40, 9);
        let records = records_from_pairs(&pairs);
        let options = RunOptions { parse_success_rate: 0.90, ..Default::default() };
        let out = run_audit(&records, &fast_config(), &options).unwrap();
        assert!(!out.reading.valid);
        let reason = out.reading.invalid_reason.clone().unwrap();
        assert!(reason.contains("parse-success"), "{reason}");
        assert!(render_report(&out).starts_with("**INVALID READING**"));
        // parse breach also excludes every grid cell
        assert!(out.cells.iter().all(|c| c.validity_excluded));
    }

    #[test]
    fn same_inputs_give_byte_identical_reports() {
        let pairs = planted_pairs(
            &PlantSpec { steering_strength: 0.4, n_pairs: 90, ..Default::default() },
            11,
        );
        let records = records_from_pairs(&pairs);
        let run = || run_audit(&records, &fast_config(), &RunOptions::default()).unwrap();
        let a = run();
        let b = run();
        assert_eq!(render_report(&a), render_report(&b));
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn window_filter_drops_far_from_threshold_records() {
        let mut pairs = exchangeable_null_pairs(30, 13);
        // push half the pairs far above the window
        for p in pairs.iter_mut().take(15) {
            p.original.baseline_surplus_cents = 50_000;
            p.factual.baseline_surplus_cents = 50_000;
        }
        let records = records_from_pairs(&pairs);
        let out = run_audit(&records, &fast_config(), &RunOptions::default()).unwrap();
        assert_eq!(out.reading.n, 15);
    }

    #[test]
    fn record_variants_survive_round_trip_ordering() {
        let pairs = exchangeable_null_pairs(10, 17);
        let records = records_from_pairs(&pairs);
        assert_eq!(records.iter().filter(|r| r.variant == Variant::Original).count(), 10);
        let (rebuilt, stats) =
            build_pairs(&records, &fast_config(), &RunOptions::default()).unwrap();
        assert_eq!(rebuilt.len(), 10);
        assert_eq!(stats.singletons_dropped, 0);
    }
}
