//! File formats: market JSON, msgcap JSONL (header line + records),
//! paper-shaped episode-record JSONL for ingest, and SHA-256 checksum
//! helpers.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::Market;
use crate::pairing::EpisodeRecord;
use crate::providers::{Condition, Msgcap, Recommendation};

pub fn write_market(market: &Market, dir: &Path) -> Result<std::path::PathBuf> {
    let path = dir.join(market.file_name());
    std::fs::write(&path, serde_json::to_string_pretty(market)?)?;
    Ok(path)
}

pub fn read_market(path: &Path) -> Result<Market> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Msgcap JSONL header line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MsgcapHeader {
    scenario_id: String,
    condition: Condition,
    signal_weight: f64,
    episode_seed: u64,
    producer_fingerprint: String,
}

/// JSONL: one header line, then one Recommendation per line.
pub fn write_msgcap(msgcap: &Msgcap, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let header = MsgcapHeader {
        scenario_id: msgcap.scenario_id.clone(),
        condition: msgcap.condition,
        signal_weight: msgcap.signal_weight,
        episode_seed: msgcap.episode_seed,
        producer_fingerprint: msgcap.producer_fingerprint.clone(),
    };
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for rec in &msgcap.records {
        writeln!(file, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

pub fn read_msgcap(path: &Path) -> Result<Msgcap> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header_line = lines
        .next()
        .ok_or(Error::EmptyInput("msgcap file has no header line"))??;
    let header: MsgcapHeader = serde_json::from_str(&header_line)?;
    let records: Vec<Recommendation> = lines
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect::<Result<_>>()?;
    Ok(Msgcap {
        scenario_id: header.scenario_id,
        condition: header.condition,
        signal_weight: header.signal_weight,
        episode_seed: header.episode_seed,
        producer_fingerprint: header.producer_fingerprint,
        records,
    })
}

/// Episode-record JSONL in the released raw-log shape; the ingest format.
pub fn write_records(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for rec in records {
        writeln!(file, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("record file contains no records"));
    }
    Ok(records)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// One file's checksum verification outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE", tag = "status")]
pub enum ChecksumStatus {
    Ok,
    Mismatch { expected: String, actual: String },
    Missing,
}

/// Recompute and compare; used by the verify command.
pub fn verify_checksum(path: &Path, expected: &str) -> ChecksumStatus {
    if !path.exists() {
        return ChecksumStatus::Missing;
    }
    match sha256_file(path) {
        Ok(actual) if actual == expected => ChecksumStatus::Ok,
        Ok(actual) => ChecksumStatus::Mismatch { expected: expected.to_string(), actual },
        Err(_) => ChecksumStatus::Missing,
    }
}
