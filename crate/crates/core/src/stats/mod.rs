//! Inference over paired accept/reject outcomes: exact McNemar, paired
//! risk difference with score and bootstrap intervals, scenario-clustered
//! grid max-stat permutation, Holm-corrected Wilcoxon feature tests, and
//! subgroup/regime classification.

pub mod ci;
pub mod mcnemar;
pub mod permutation;
pub mod rd;
pub mod subgroup;
pub mod wilcoxon;

pub use ci::{bootstrap_rd_ci, rd_confidence_interval};
pub use mcnemar::mcnemar_exact;
pub use permutation::{
    cluster_max_stat_permutation, FlipMode, PermutationResult, PermutationScheme,
};
pub use rd::{
    classify_regimes, paired_rd, CellResult, DiscordantCounts, RegimeLabel, RuleParams,
    ValidityThresholds,
};
pub use subgroup::{subgroup_analysis, Stratifier, SubgroupResult};
pub use wilcoxon::{holm_adjust, holm_wilcoxon, wilcoxon_signed_rank, FeatureTest};
