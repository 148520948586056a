//! The frozen audit configuration. Defaults reproduce the locked
//! Round-20 protocol; any override is recorded (with the config hash)
//! in the run manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::gates::GateThresholds;
use crate::pairing::{PairingMode, WindowSpec};
use crate::rule::{GovernancePoint, RuleCoefficients};
use crate::stats::rd::{RuleParams, ValidityThresholds};
use crate::stats::FlipMode;
use crate::sweep::GridSpec;

/// Welfare-rule section as fractions; converted to exact micro fixed
/// point on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub fit: f64,
    pub trust: f64,
    pub risk: f64,
    pub urgency: f64,
    /// Hard floor on baseline surplus as a fraction of budget.
    pub floor: f64,
    pub lambda: f64,
    pub kappa: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            fit: 0.03,
            trust: 0.015,
            risk: -0.025,
            urgency: 0.01,
            floor: -0.10,
            lambda: 1.0,
            kappa: 0.05,
        }
    }
}

impl RuleConfig {
    pub fn coefficients(&self) -> RuleCoefficients {
        RuleCoefficients::from_fractions(self.fit, self.trust, self.risk, self.urgency)
    }

    pub fn rule_params(&self) -> RuleParams {
        RuleParams {
            coefficients: self.coefficients(),
            floor_micro: crate::fixed::to_micro(self.floor),
        }
    }

    pub fn deployed_point(&self) -> GovernancePoint {
        GovernancePoint::new(self.lambda, self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub lower_fraction: f64,
    pub upper_fraction: f64,
    pub per_stratum_target: usize,
    pub per_stratum_cap: Option<usize>,
    pub sample_seed: u64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lower_fraction: -0.10,
            upper_fraction: 0.05,
            per_stratum_target: 100,
            per_stratum_cap: None,
            sample_seed: 42,
        }
    }
}

impl WindowConfig {
    pub fn spec(&self) -> WindowSpec {
        WindowSpec {
            lower_micro: crate::fixed::to_micro(self.lower_fraction),
            upper_micro: crate::fixed::to_micro(self.upper_fraction),
            per_stratum_target: self.per_stratum_target,
            per_stratum_cap: self.per_stratum_cap,
            sample_seed: self.sample_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub n_perm: usize,
    pub perm_seed: u64,
    pub exhaustive: bool,
    pub flip_mode: FlipMode,
    pub ci_level: f64,
    pub fact_accept_ceiling: f64,
    pub parse_success_min: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            n_perm: 1000,
            perm_seed: 20_260_420,
            exhaustive: false,
            flip_mode: FlipMode::PerCluster,
            ci_level: 0.95,
            fact_accept_ceiling: 0.98,
            parse_success_min: 0.95,
        }
    }
}

impl StatsConfig {
    pub fn validity_thresholds(&self) -> ValidityThresholds {
        ValidityThresholds {
            fact_accept_ceiling: self.fact_accept_ceiling,
            parse_success_min: self.parse_success_min,
        }
    }
}

/// Top-level frozen configuration; TOML on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub rule: RuleConfig,
    pub window: WindowConfig,
    pub pairing: PairingMode,
    pub stats: StatsConfig,
    pub gates: GateThresholds,
    pub grid: GridSpec,
    /// Extra refusal phrases appended to the built-in v1+v2 list, one
    /// per line in the referenced file.
    pub refusal_patterns_file: Option<String>,
}

impl AuditConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form; pinned in run manifests.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string().as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Floor in micro fixed point (fraction of budget).
    pub fn floor_micro(&self) -> i64 {
        crate::fixed::to_micro(self.rule.floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::DEPLOYED_FLOOR_MICRO;

    #[test]
    fn defaults_are_the_frozen_protocol() {
        let cfg = AuditConfig::default();
        assert_eq!(cfg.rule.coefficients(), RuleCoefficients::deployed());
        assert_eq!(cfg.rule.deployed_point(), GovernancePoint::deployed());
        assert_eq!(cfg.floor_micro(), DEPLOYED_FLOOR_MICRO);
        assert_eq!(cfg.window.spec(), WindowSpec::diagnostic());
        assert_eq!(cfg.pairing, PairingMode::Tuple3);
        assert_eq!(cfg.stats.n_perm, 1000);
        assert_eq!(cfg.grid.cells().len(), 36);
        assert_eq!(cfg.gates, GateThresholds::default());
    }

    #[test]
    fn toml_round_trip_preserves_hash() {
        let cfg = AuditConfig::default();
        let text = cfg.to_toml_string();
        let back = AuditConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = AuditConfig::default();
        let mut b = AuditConfig::default();
        b.stats.n_perm = 2000;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = AuditConfig::from_toml_str("[stats]\nn_perm = 250\n").unwrap();
        assert_eq!(cfg.stats.n_perm, 250);
        assert_eq!(cfg.rule, RuleConfig::default());
    }
}
