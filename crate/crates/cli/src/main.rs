//! `tourmart` — command-line front end for the parametric audit
//! instrument. Exit codes: 0 = valid reading, 2 = invalid reading,
//! 3 = input error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tourmart::config::AuditConfig;
use tourmart::gates::{
    compute_msgcap_stats, evaluate_gates, render_gate_report, GateThresholds, GateVector,
    RefusalClassifier,
};
use tourmart::harness::synthesize_records;
use tourmart::io::{
    read_market, read_msgcap, read_records, sha256_file, verify_checksum, write_market,
    write_msgcap, write_records, ChecksumStatus,
};
use tourmart::market::{generate_small_market, Market, Regime};
use tourmart::pairing::{PairedStimulus, PairingMode};
use tourmart::providers::{
    produce_msgcap, Condition, MessageProducer, Msgcap, PerceptionReader, ProducerConfig,
    SyntheticProducer, SyntheticReader,
};
use tourmart::report::{build_pairs, render_report, run_audit, RunOptions};
use tourmart::rule::Channel;
use tourmart::sweep::{attribution_sweep, clip_binding_map, grid_to_csv, run_grid};

const EXIT_INVALID_READING: u8 = 2;
const EXIT_INPUT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "tourmart", version, about = "Parametric commission-steering audit")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalFlags {
    /// Base seed for market generation and synthetic providers.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Frozen protocol config (TOML); defaults to the built-in Round-20
    /// values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pairing key override.
    #[arg(long, global = true, value_enum)]
    pairing: Option<PairingArg>,
    /// Near-threshold window: the frozen diagnostic window, or the
    /// custom bounds from the --config file's [window] section.
    #[arg(long, global = true, value_enum, default_value_t = WindowArg::Diagnostic)]
    window: WindowArg,
    /// Permutation count override.
    #[arg(long, global = true)]
    n_perm: Option<usize>,
    /// Enumerate all sign flips instead of Monte Carlo sampling.
    #[arg(long, global = true)]
    exhaustive: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum PairingArg {
    Tuple3,
    Tuple5,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum WindowArg {
    Diagnostic,
    Custom,
}

#[derive(Copy, Clone, ValueEnum)]
enum RegimeArg {
    Loose,
    Tight,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Loose => Regime::Loose,
            RegimeArg::Tight => Regime::Tight,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum ConditionArg {
    Commission,
    Satisfaction,
    Disclosure,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::Commission => Condition::Commission,
            ConditionArg::Satisfaction => Condition::Satisfaction,
            ConditionArg::Disclosure => Condition::DisclosureCompliant,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum ChannelArg {
    All,
    Fit,
    Trust,
    Risk,
    Urgency,
}

#[derive(Args, Clone)]
struct ProducerFlags {
    /// Steering strength s in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    steering: f64,
    /// Probability of a refusal message per traveler.
    #[arg(long, default_value_t = 0.0)]
    refusal_rate: f64,
    /// Emit the degenerate six-word template for every success.
    #[arg(long)]
    template_collapse: bool,
    /// Probability of appending a raw bundle-id reference.
    #[arg(long, default_value_t = 0.0)]
    id_leak_rate: f64,
}

impl ProducerFlags {
    fn config(&self) -> ProducerConfig {
        ProducerConfig {
            steering_strength: self.steering,
            refusal_rate: self.refusal_rate,
            template_collapse: self.template_collapse,
            id_leak_rate: self.id_leak_rate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded small markets.
    Generate {
        #[arg(long, value_enum, default_value_t = RegimeArg::Loose)]
        regime: RegimeArg,
        /// Number of markets; seeds are seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Produce a message capture for one market under an OTA condition.
    Produce {
        #[arg(long)]
        market: PathBuf,
        #[arg(long, value_enum, default_value_t = ConditionArg::Commission)]
        condition: ConditionArg,
        #[arg(long, default_value_t = 0.5)]
        signal_weight: f64,
        #[arg(long, default_value_t = 1)]
        episode_seed: u64,
        #[command(flatten)]
        producer: ProducerFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full synthetic end-to-end run: markets -> messages -> perceptions
    /// -> pairs -> reading, persisting every intermediate.
    Replay {
        #[arg(long, default_value_t = 8)]
        markets: u64,
        #[arg(long, value_enum, default_value_t = ConditionArg::Commission)]
        condition: ConditionArg,
        #[command(flatten)]
        producer: ProducerFlags,
        /// Reader perception noise scale.
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Comma-separated signal weights.
        #[arg(long, default_value = "0.2,0.5,0.8", value_delimiter = ',')]
        signal_weights: Vec<f64>,
        /// Comma-separated episode seeds.
        #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
        episode_seeds: Vec<u64>,
        #[arg(long, default_value = "replay_out")]
        out_dir: PathBuf,
    },
    /// Window-filter and pair raw episode records.
    Pair {
        #[arg(long)]
        records: PathBuf,
        /// Write the pair set as JSONL (one pair per line).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply per-stratum sampling after pairing.
        #[arg(long)]
        sample: bool,
    },
    /// Evaluate the 36-cell governance grid over a frozen pair set.
    Sweep {
        #[arg(long)]
        pairs: PathBuf,
        /// Grid name; only the frozen default grid is defined.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coefficient-zero attribution deltas (not a causal mediation
    /// estimate).
    Attribution {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value_t = ChannelArg::All)]
        channel: ChannelArg,
    },
    /// Per-cell clip-binding fractions.
    Clipmap {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Six-gate producer audit of a message capture.
    Gates {
        #[arg(long)]
        msgcap: PathBuf,
        #[arg(long)]
        market: PathBuf,
        /// TOML file overriding the frozen gate thresholds.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Write the machine-readable verdict JSON here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Score a raw record set end to end and render the compliance
    /// report.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Optional producer capture to gate alongside the reading.
        #[arg(long)]
        msgcap: Option<PathBuf>,
        /// Market for the msgcap gate pass (required with --msgcap).
        #[arg(long)]
        market: Option<PathBuf>,
        #[arg(long, default_value = "audit_out")]
        out_dir: PathBuf,
        /// Apply per-stratum sampling (off when replaying a frozen
        /// sample).
        #[arg(long)]
        sample: bool,
        /// Reader parse-success rate to stamp on the run (1.0 for pure
        /// re-scoring of already-extracted perceptions).
        #[arg(long, default_value_t = 1.0)]
        parse_success: f64,
    },
    /// Recompute SHA-256 checksums against an expected manifest.
    Verify {
        /// JSON object mapping relative paths to expected sha256 hex.
        #[arg(long)]
        checksums: PathBuf,
        #[arg(long, default_value = ".")]
        base: PathBuf,
    },
    /// Validate and normalize a released raw JSONL log into the record
    /// format used by every other subcommand.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INPUT_ERROR,
            };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn load_config(global: &GlobalFlags) -> Result<AuditConfig> {
    let mut config = match &global.config {
        Some(path) => AuditConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => AuditConfig::default(),
    };
    if global.window == WindowArg::Diagnostic {
        // the frozen diagnostic window, regardless of the config file
        config.window = Default::default();
    }
    if let Some(p) = global.pairing {
        config.pairing = match p {
            PairingArg::Tuple3 => PairingMode::Tuple3,
            PairingArg::Tuple5 => PairingMode::Tuple5,
        };
    }
    if let Some(n) = global.n_perm {
        config.stats.n_perm = n;
    }
    if global.exhaustive {
        config.stats.exhaustive = true;
    }
    Ok(config)
}

fn refusal_classifier(config: &AuditConfig) -> Result<RefusalClassifier> {
    match &config.refusal_patterns_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading refusal patterns {path}"))?;
            Ok(RefusalClassifier::with_extra_patterns(&text))
        }
        None => Ok(RefusalClassifier::default()),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<PairedStimulus>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading pairs {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(
            serde_json::from_str(line)
                .with_context(|| format!("{}:{}: bad pair record", path.display(), i + 1))?,
        );
    }
    if pairs.is_empty() {
        bail!("{}: no pairs", path.display());
    }
    Ok(pairs)
}

fn write_pairs(pairs: &[PairedStimulus], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn gate_pass(
    msgcap: &Msgcap,
    market: &Market,
    thresholds: &GateThresholds,
    classifier: &RefusalClassifier,
) -> Result<(tourmart::gates::GateStats, GateVector)> {
    let stats = compute_msgcap_stats(msgcap, market, classifier)?;
    let vector = evaluate_gates(&stats, thresholds);
    Ok((stats, vector))
}

fn run(cli: Cli) -> Result<u8> {
    let global = cli.global.clone();
    let config = load_config(&global)?;
    match cli.command {
        Command::Generate { regime, count, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            for i in 0..count {
                let market = generate_small_market(global.seed + i, regime.into());
                let path = write_market(&market, &out_dir)?;
                println!(
                    "wrote {} ({} travelers, {} bundles)",
                    path.display(),
                    market.travelers.len(),
                    market.bundles.len()
                );
            }
            Ok(0)
        }
        Command::Produce { market, condition, signal_weight, episode_seed, producer, out } => {
            let market = read_market(&market)?;
            let cfg = producer.config();
            cfg.validate()?;
            let producer = SyntheticProducer::new(cfg);
            let cap =
                produce_msgcap(&market, condition.into(), signal_weight, episode_seed, &producer);
            write_msgcap(&cap, &out)?;
            let successes = cap.records.iter().filter(|r| r.success).count();
            println!(
                "wrote {} ({} calls, {} successes, fingerprint {})",
                out.display(),
                cap.records.len(),
                successes,
                cap.producer_fingerprint
            );
            Ok(0)
        }
        Command::Replay {
            markets,
            condition,
            producer,
            noise,
            signal_weights,
            episode_seeds,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let producer_cfg = producer.config();
            producer_cfg.validate()?;
            let producer = SyntheticProducer::new(producer_cfg);
            let reader = SyntheticReader::with_noise(noise);

            let market_set: Vec<Market> = (0..markets)
                .map(|i| {
                    let regime = if i % 2 == 0 { Regime::Loose } else { Regime::Tight };
                    generate_small_market(global.seed + i, regime)
                })
                .collect();
            for m in &market_set {
                write_market(m, &out_dir)?;
            }
            let (records, synth_stats) = synthesize_records(
                &market_set,
                condition.into(),
                &signal_weights,
                &episode_seeds,
                &producer,
                &reader,
            )?;
            let records_path = out_dir.join("records.raw.jsonl");
            write_records(&records, &records_path)?;
            println!(
                "synthesized {} records ({} reader calls, {} parse failures)",
                records.len(),
                synth_stats.reader_calls,
                synth_stats.parse_failures
            );

            // gate the producer on the first capture (representative: the
            // synthetic producer is stationary across markets)
            let classifier = refusal_classifier(&config)?;
            let first_cap = produce_msgcap(
                &market_set[0],
                condition.into(),
                signal_weights[0],
                episode_seeds[0],
                &producer,
            );
            let (gate_stats, gate_vector) =
                gate_pass(&first_cap, &market_set[0], &config.gates, &classifier)?;

            let options = RunOptions {
                apply_window: true,
                apply_sampling: true,
                parse_success_rate: synth_stats.parse_success_rate(),
                provider_fingerprints: vec![producer.fingerprint(), reader.fingerprint()],
                input_checksums: checksum_map(&[&records_path])?,
                gate_vector: Some(gate_vector.clone()),
            };
            emit_audit(&records, &config, &options, &out_dir, Some((&gate_stats, &gate_vector)))
        }
        Command::Pair { records, out, sample } => {
            let recs = read_records(&records)?;
            let options = RunOptions { apply_sampling: sample, ..Default::default() };
            let (pairs, stats) = build_pairs(&recs, &config, &options)?;
            println!(
                "{} pairs ({} singletons dropped, {} realizations collapsed, {} duplicates \
                 deduped), {} scenario clusters",
                stats.pairs,
                stats.singletons_dropped,
                stats.realizations_collapsed,
                stats.duplicates_deduped,
                tourmart::pairing::cluster_count(&pairs)
            );
            if let Some(out) = out {
                write_pairs(&pairs, &out)?;
                println!("wrote {}", out.display());
            }
            Ok(0)
        }
        Command::Sweep { pairs, grid, out } => {
            if grid != "default" {
                bail!("unknown grid '{grid}'; only 'default' is defined");
            }
            let pairs = read_pairs(&pairs)?;
            let cells = run_grid(
                &pairs,
                &config.grid,
                &config.rule.rule_params(),
                1.0,
                &config.stats.validity_thresholds(),
            )?;
            std::fs::write(&out, grid_to_csv(&cells))?;
            let included = cells.iter().filter(|c| !c.validity_excluded).count();
            let max = tourmart::sweep::max_rd(&cells);
            println!(
                "wrote {} ({} cells, {} included{})",
                out.display(),
                cells.len(),
                included,
                max.map(|m| format!(", max RD {:+.2}pp", m * 100.0)).unwrap_or_default()
            );
            Ok(0)
        }
        Command::Attribution { pairs, channel } => {
            let pairs = read_pairs(&pairs)?;
            let results = attribution_sweep(
                &pairs,
                &config.grid,
                &config.rule.rule_params(),
                1.0,
                &config.stats.validity_thresholds(),
            )?;
            let wanted = |c: Channel| match channel {
                ChannelArg::All => true,
                ChannelArg::Fit => c == Channel::Fit,
                ChannelArg::Trust => c == Channel::Trust,
                ChannelArg::Risk => c == Channel::Risk,
                ChannelArg::Urgency => c == Channel::Urgency,
            };
            println!("channel   baseline_max_rd  zeroed_max_rd  delta");
            for r in results.iter().filter(|r| wanted(r.channel)) {
                println!(
                    "{:<9} {:>+14.2}pp {:>+12.2}pp {:>+6.2}pp",
                    format!("{:?}", r.channel).to_lowercase(),
                    r.baseline_max_rd * 100.0,
                    r.zeroed_max_rd * 100.0,
                    r.delta * 100.0
                );
            }
            println!("note: {}", tourmart::sweep::ATTRIBUTION_LABEL);
            Ok(0)
        }
        Command::Clipmap { pairs, out } => {
            let pairs = read_pairs(&pairs)?;
            let cells = run_grid(
                &pairs,
                &config.grid,
                &config.rule.rule_params(),
                1.0,
                &config.stats.validity_thresholds(),
            )?;
            let map = clip_binding_map(&cells);
            let mut csv = String::from("lambda,kappa,clip_rate_pct\n");
            for (g, rate) in &map {
                csv.push_str(&format!("{},{},{:.1}\n", g.lambda(), g.kappa(), rate * 100.0));
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Gates { msgcap, market, thresholds, json_out } => {
            let cap = read_msgcap(&msgcap)?;
            let market = read_market(&market)?;
            let thresholds = match thresholds {
                Some(path) => toml::from_str(&std::fs::read_to_string(&path)?)
                    .with_context(|| format!("parsing thresholds {}", path.display()))?,
                None => config.gates,
            };
            let classifier = refusal_classifier(&config)?;
            let (stats, vector) = gate_pass(&cap, &market, &thresholds, &classifier)?;
            let arm = format!("{} (w={}, seed={})", cap.condition, cap.signal_weight, cap.episode_seed);
            print!("{}", render_gate_report(&arm, &stats, &vector));
            if let Some(path) = json_out {
                let doc = serde_json::json!({ "stats": stats, "vector": vector });
                std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
            }
            Ok(0)
        }
        Command::Report { records, msgcap, market, out_dir, sample, parse_success } => {
            let recs = read_records(&records)?;
            let gate = match (&msgcap, &market) {
                (Some(m), Some(mk)) => {
                    let cap = read_msgcap(m)?;
                    let mk = read_market(mk)?;
                    let classifier = refusal_classifier(&config)?;
                    Some(gate_pass(&cap, &mk, &config.gates, &classifier)?)
                }
                (Some(_), None) | (None, Some(_)) => {
                    bail!("--msgcap and --market must be given together")
                }
                (None, None) => None,
            };
            let mut checked: Vec<&Path> = vec![records.as_path()];
            if let Some(p) = &msgcap {
                checked.push(p);
            }
            let options = RunOptions {
                apply_window: true,
                apply_sampling: sample,
                parse_success_rate: parse_success,
                provider_fingerprints: vec![],
                input_checksums: checksum_map(&checked)?,
                gate_vector: gate.as_ref().map(|(_, v)| v.clone()),
            };
            std::fs::create_dir_all(&out_dir)?;
            emit_audit(
                &recs,
                &config,
                &options,
                &out_dir,
                gate.as_ref().map(|(s, v)| (s, v)),
            )
        }
        Command::Verify { checksums, base } => {
            let text = std::fs::read_to_string(&checksums)
                .with_context(|| format!("reading {}", checksums.display()))?;
            let expected: BTreeMap<String, String> =
                serde_json::from_str(&text).context("checksum manifest must be a JSON object")?;
            let mut bad = 0;
            for (rel, want) in &expected {
                let status = verify_checksum(&base.join(rel), want);
                match status {
                    ChecksumStatus::Ok => println!("OK       {rel}"),
                    ChecksumStatus::Missing => {
                        bad += 1;
                        println!("MISSING  {rel}");
                    }
                    ChecksumStatus::Mismatch { expected, actual } => {
                        bad += 1;
                        println!("MISMATCH {rel} (expected {expected}, got {actual})");
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} of {} files failed verification", expected.len());
            }
            println!("all {} files verified", expected.len());
            Ok(0)
        }
        Command::Ingest { input, out } => {
            let records = read_records(&input)?;
            write_records(&records, &out)?;
            println!(
                "ingested {} records -> {} (sha256 {})",
                records.len(),
                out.display(),
                sha256_file(&out)?
            );
            Ok(0)
        }
    }
}

fn checksum_map(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for p in paths {
        // keyed by file name, not full path: the manifest pins content,
        // so relocating a run directory must not change its hash
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        map.insert(name, sha256_file(p)?);
    }
    Ok(map)
}

/// Run the audit, persist every artifact next to the report, print the
/// verdict line, and map the reading's validity to the exit code.
fn emit_audit(
    records: &[tourmart::pairing::EpisodeRecord],
    config: &AuditConfig,
    options: &RunOptions,
    out_dir: &Path,
    gate: Option<(&tourmart::gates::GateStats, &GateVector)>,
) -> Result<u8> {
    std::fs::create_dir_all(out_dir)?;
    let output = run_audit(records, config, options)?;
    let report = render_report(&output);
    std::fs::write(out_dir.join("report.md"), &report)?;
    std::fs::write(out_dir.join("audit.json"), serde_json::to_string_pretty(&output)?)?;
    std::fs::write(out_dir.join("grid.csv"), grid_to_csv(&output.cells))?;
    std::fs::write(
        out_dir.join("null_max_rds.json"),
        serde_json::to_string(&output.permutation.null_max_rds)?,
    )?;
    if let Some((stats, vector)) = gate {
        std::fs::write(
            out_dir.join("gates.md"),
            render_gate_report("producer", stats, vector),
        )?;
    }
    let r = &output.reading;
    println!(
        "reading: {} delta={:+.2}pp (b={}, c={}, n={}) mcnemar_p={:.4} perm_p={} manifest {}",
        if r.valid { "VALID" } else { "INVALID" },
        r.delta_pp(),
        r.counts.b,
        r.counts.c,
        r.n,
        r.mcnemar_p,
        r.permutation_p_display,
        r.manifest_hash
    );
    println!("wrote {}", out_dir.join("report.md").display());
    Ok(if r.valid { 0 } else { EXIT_INVALID_READING })
}
