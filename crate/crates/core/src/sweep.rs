//! The 36-cell (lambda, kappa) governance grid: per-cell evaluation,
//! clip-binding map, coefficient-zero attribution, and heatmap data
//! emission (CSV + JSON; rendering is external).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pairing::PairedStimulus;
use crate::rule::{zero_coefficient, Channel, GovernancePoint};
use crate::stats::rd::{
    classify_regimes, paired_rd, CellResult, RuleParams, ValidityThresholds,
};

/// The attribution caveat, quoted verbatim in every attribution output.
pub const ATTRIBUTION_LABEL: &str = "not a causal mediation estimate";

/// Grid axes. Kappas are exact fractions of budget, printed as percents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub kappas: Vec<f64>,
    /// Optional diagnostic row: lambda = 0 nullifies every adjustment.
    pub include_lambda_zero_row: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambdas: vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            kappas: vec![0.01, 0.025, 0.05, 0.10, 0.20, 1.00],
            include_lambda_zero_row: false,
        }
    }
}

impl GridSpec {
    /// Row-major cells (lambda outer, kappa inner).
    pub fn cells(&self) -> Vec<GovernancePoint> {
        let mut lambdas = self.lambdas.clone();
        if self.include_lambda_zero_row {
            lambdas.insert(0, 0.0);
        }
        lambdas
            .iter()
            .flat_map(|&l| self.kappas.iter().map(move |&k| GovernancePoint::new(l, k)))
            .collect()
    }

    pub fn contains_deployed(&self) -> bool {
        self.cells().contains(&GovernancePoint::deployed())
    }
}

/// Per-channel attribution: the grid max RD with that channel's
/// coefficient zeroed, against the baseline max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub channel: Channel,
    pub baseline_max_rd: f64,
    pub zeroed_max_rd: f64,
    pub delta: f64,
    /// Always ATTRIBUTION_LABEL.
    pub caveat: String,
}

/// Pure re-scoring of frozen perception vectors at every grid cell;
/// no provider calls. Exclusion flags and regime labels are stamped
/// from the supplied parse-success rate.
pub fn run_grid(
    pairs: &[PairedStimulus],
    grid: &GridSpec,
    rule: &RuleParams,
    parse_success_rate: f64,
    thresholds: &ValidityThresholds,
) -> Result<Vec<CellResult>> {
    let mut cells = grid
        .cells()
        .iter()
        .map(|g| paired_rd(pairs, g, rule))
        .collect::<Result<Vec<_>>>()?;
    classify_regimes(&mut cells, parse_success_rate, thresholds);
    Ok(cells)
}

/// Max RD over non-excluded cells (the permutation convention); None
/// when every cell is excluded.
pub fn max_rd(cells: &[CellResult]) -> Option<f64> {
    cells
        .iter()
        .filter(|c| !c.validity_excluded)
        .map(|c| c.rd)
        .max_by(|a, b| a.partial_cmp(b).unwrap())
}

/// Re-run the grid once per channel with that coefficient zeroed.
pub fn attribution_sweep(
    pairs: &[PairedStimulus],
    grid: &GridSpec,
    rule: &RuleParams,
    parse_success_rate: f64,
    thresholds: &ValidityThresholds,
) -> Result<Vec<AttributionResult>> {
    let baseline_cells = run_grid(pairs, grid, rule, parse_success_rate, thresholds)?;
    let baseline = max_rd(&baseline_cells).unwrap_or(0.0);
    Channel::ALL
        .iter()
        .map(|&channel| {
            let zeroed_rule = RuleParams {
                coefficients: zero_coefficient(&rule.coefficients, channel),
                floor_micro: rule.floor_micro,
            };
            let cells = run_grid(pairs, grid, &zeroed_rule, parse_success_rate, thresholds)?;
            let zeroed = max_rd(&cells).unwrap_or(0.0);
            Ok(AttributionResult {
                channel,
                baseline_max_rd: baseline,
                zeroed_max_rd: zeroed,
                delta: zeroed - baseline,
                caveat: ATTRIBUTION_LABEL.to_string(),
            })
        })
        .collect()
}

/// Fraction of the 2n evaluations per cell where the clip binds.
pub fn clip_binding_map(cells: &[CellResult]) -> Vec<(GovernancePoint, f64)> {
    cells.iter().map(|c| (c.governance, c.clip_rate)).collect()
}

/// One row per cell:
/// lambda,kappa,rd_pp,b,c,n,clip_rate_pct,fact_acc_pct,excluded,regime
pub fn grid_to_csv(cells: &[CellResult]) -> String {
    let mut out =
        String::from("lambda,kappa,rd_pp,b,c,n,clip_rate_pct,fact_acc_pct,excluded,regime\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{:.4},{},{},{},{:.2},{:.2},{},{}\n",
            cell.governance.lambda(),
            cell.governance.kappa(),
            cell.rd_pp(),
            cell.counts.b,
            cell.counts.c,
            cell.counts.n(),
            cell.clip_rate * 100.0,
            cell.fact_accept_rate * 100.0,
            cell.validity_excluded,
            cell.regime.map(|r| r.to_string()).unwrap_or_default(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::Phi;
    use crate::stats::rd::tests::pair_with;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pairs(n: usize, seed: u64) -> Vec<PairedStimulus> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let phi = |rng: &mut ChaCha8Rng| Phi {
                    fit: rng.gen_range(-0.5..0.5),
                    risk: rng.gen_range(-0.5..0.5),
                    trust: rng.gen_range(0.0..1.0),
                    urgency: rng.gen_range(-0.2..0.2),
                };
                let surplus = rng.gen_range(4_000..6_000);
                pair_with(i, phi(&mut rng), phi(&mut rng), surplus, 100_000, 0.05)
            })
            .collect()
    }

    fn full_grid(pairs: &[PairedStimulus], rule: &RuleParams) -> Vec<CellResult> {
        run_grid(pairs, &GridSpec::default(), rule, 1.0, &ValidityThresholds::default()).unwrap()
    }

    #[test]
    fn thirty_six_cells_including_deployed() {
        let grid = GridSpec::default();
        assert_eq!(grid.cells().len(), 36);
        assert!(grid.contains_deployed());
    }

    #[test]
    fn deployed_cell_matches_standalone_paired_rd() {
        let pairs = random_pairs(60, 5);
        let rule = RuleParams::default();
        let cells = full_grid(&pairs, &rule);
        let standalone = paired_rd(&pairs, &GovernancePoint::deployed(), &rule).unwrap();
        let in_grid = cells
            .iter()
            .find(|c| c.governance == GovernancePoint::deployed())
            .unwrap();
        assert_eq!(in_grid.counts, standalone.counts);
        assert_eq!(in_grid.rd, standalone.rd);
        assert_eq!(in_grid.clip_rate, standalone.clip_rate);
    }

    #[test]
    fn lambda_zero_row_nullifies() {
        let pairs = random_pairs(200, 7);
        let rule = RuleParams::default();
        let grid = GridSpec { include_lambda_zero_row: true, ..Default::default() };
        let cells =
            run_grid(&pairs, &grid, &rule, 1.0, &ValidityThresholds::default()).unwrap();
        assert_eq!(cells.len(), 42);
        for cell in cells.iter().filter(|c| c.governance.lambda_micro == 0) {
            assert_eq!(cell.rd, 0.0, "lambda=0 cell {:?}", cell.governance);
            assert_eq!(cell.counts.b, 0);
            assert_eq!(cell.counts.c, 0);
        }
    }

    #[test]
    fn kappa_zero_nullifies() {
        let pairs = random_pairs(200, 8);
        let rule = RuleParams::default();
        let grid = GridSpec { kappas: vec![0.0], ..Default::default() };
        let cells =
            run_grid(&pairs, &grid, &rule, 1.0, &ValidityThresholds::default()).unwrap();
        for cell in &cells {
            assert_eq!(cell.rd, 0.0, "kappa=0 cell {:?}", cell.governance);
        }
    }

    #[test]
    fn attribution_zero_coefficient_equals_zero_phi_components() {
        let pairs = random_pairs(80, 11);
        let rule = RuleParams::default();
        for channel in Channel::ALL {
            let zeroed_rule = RuleParams {
                coefficients: zero_coefficient(&rule.coefficients, channel),
                floor_micro: rule.floor_micro,
            };
            let by_rule = full_grid(&pairs, &zeroed_rule);
            // zero the corresponding phi component in every record instead
            let mut phi_pairs = pairs.clone();
            for p in phi_pairs.iter_mut() {
                for rec in [&mut p.original, &mut p.factual] {
                    match channel {
                        Channel::Fit => rec.phi.fit = 0.0,
                        Channel::Trust => rec.phi.trust = 0.0,
                        Channel::Risk => rec.phi.risk = 0.0,
                        Channel::Urgency => rec.phi.urgency = 0.0,
                    }
                }
            }
            let by_phi = full_grid(&phi_pairs, &rule);
            for (a, b) in by_rule.iter().zip(&by_phi) {
                assert_eq!(a.counts, b.counts, "{channel:?} at {:?}", a.governance);
                assert_eq!(a.rd, b.rd);
            }
        }
    }

    #[test]
    fn zeroing_all_four_forces_zero_rd_everywhere() {
        let pairs = random_pairs(150, 13);
        let mut coefficients = RuleParams::default().coefficients;
        for channel in Channel::ALL {
            coefficients = zero_coefficient(&coefficients, channel);
        }
        let rule = RuleParams { coefficients, ..Default::default() };
        for cell in full_grid(&pairs, &rule) {
            assert_eq!(cell.rd, 0.0);
        }
    }

    #[test]
    fn planted_fit_steering_attributes_to_fit() {
        let zero = Phi { fit: 0.0, risk: 0.0, trust: 0.0, urgency: 0.0 };
        let push = Phi { fit: 0.6, risk: 0.0, trust: 0.0, urgency: 0.0 };
        let pairs: Vec<PairedStimulus> =
            (0..90).map(|i| pair_with(i, push, zero, 4_950, 100_000, 0.05)).collect();
        let results = attribution_sweep(
            &pairs,
            &GridSpec::default(),
            &RuleParams::default(),
            1.0,
            &ValidityThresholds::default(),
        )
        .unwrap();
        assert_eq!(results.len(), 4);
        for r in &results {
            assert_eq!(r.caveat, ATTRIBUTION_LABEL);
            assert!(r.baseline_max_rd > 0.5);
            if r.channel == Channel::Fit {
                assert!(r.zeroed_max_rd.abs() < 1e-12, "fit zeroed: {}", r.zeroed_max_rd);
            } else {
                assert_eq!(r.zeroed_max_rd, r.baseline_max_rd, "{:?}", r.channel);
            }
        }
    }

    #[test]
    fn binding_fraction_monotone_in_lambda_and_antimonotone_in_kappa() {
        let pairs = random_pairs(120, 17);
        let grid = GridSpec::default();
        let cells = full_grid(&pairs, &RuleParams::default());
        let rate = |l: f64, k: f64| {
            cells
                .iter()
                .find(|c| c.governance == GovernancePoint::new(l, k))
                .unwrap()
                .clip_rate
        };
        for &k in &grid.kappas {
            for w in grid.lambdas.windows(2) {
                assert!(rate(w[0], k) <= rate(w[1], k), "lambda {w:?} at kappa {k}");
            }
        }
        for &l in &grid.lambdas {
            for w in grid.kappas.windows(2) {
                assert!(rate(l, w[0]) >= rate(l, w[1]), "kappa {w:?} at lambda {l}");
            }
        }
        // kappa = 1.00 never binds for |lambda * c . phi| <= 1
        for &l in &[1.0, 2.0, 3.0] {
            assert_eq!(rate(l, 1.00), 0.0);
        }
    }

    #[test]
    fn csv_layout() {
        let pairs = random_pairs(10, 23);
        let cells = full_grid(&pairs, &RuleParams::default());
        let csv = grid_to_csv(&cells);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "lambda,kappa,rd_pp,b,c,n,clip_rate_pct,fact_acc_pct,excluded,regime"
        );
        assert_eq!(lines.count(), 36);
        assert!(csv.contains("\n1,0.05,"));
    }
}
