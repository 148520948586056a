//! The frozen deterministic welfare rule: a perception vector and an
//! economic state map to accept/reject under two governance dials,
//! lambda (gain on the message-induced adjustment) and kappa
//! (budget-normalized cap on it). All comparisons are exact integer
//! arithmetic in micro fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{div_round, Cents, MICRO};

/// Four perceived features extracted from a message, each in [-1, 1].
/// `reasoning` is free text and never enters the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionVector {
    pub fit_delta: f64,
    pub trust: f64,
    pub risk: f64,
    pub urgency: f64,
    #[serde(default)]
    pub reasoning: String,
}

impl PerceptionVector {
    pub fn new(fit_delta: f64, trust: f64, risk: f64, urgency: f64) -> Self {
        PerceptionVector { fit_delta, trust, risk, urgency, reasoning: String::new() }
    }

    /// Range check. Out-of-range components are a parse failure upstream;
    /// they are never silently clamped here.
    pub fn validate(&self) -> Result<()> {
        for (channel, value) in [
            ("fit_delta", self.fit_delta),
            ("trust", self.trust),
            ("risk", self.risk),
            ("urgency", self.urgency),
        ] {
            if !(value.is_finite() && (-1.0..=1.0).contains(&value)) {
                return Err(Error::PerceptionOutOfRange { channel, value });
            }
        }
        Ok(())
    }

    fn to_micro(&self) -> [i64; 4] {
        [
            crate::fixed::to_micro(self.fit_delta),
            crate::fixed::to_micro(self.trust),
            crate::fixed::to_micro(self.risk),
            crate::fixed::to_micro(self.urgency),
        ]
    }
}

/// One of the four perception channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Fit,
    Trust,
    Risk,
    Urgency,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Fit, Channel::Trust, Channel::Risk, Channel::Urgency];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Fit => "fit",
            Channel::Trust => "trust",
            Channel::Risk => "risk",
            Channel::Urgency => "urgency",
        }
    }
}

/// Signed rule weights, micro fixed point. The deployed default carries
/// the risk sign inside the vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCoefficients {
    pub fit_micro: i64,
    pub trust_micro: i64,
    pub risk_micro: i64,
    pub urgency_micro: i64,
}

impl RuleCoefficients {
    /// Deployed Round-20 vector: (0.03, 0.015, -0.025, 0.01).
    pub fn deployed() -> Self {
        RuleCoefficients {
            fit_micro: 30_000,
            trust_micro: 15_000,
            risk_micro: -25_000,
            urgency_micro: 10_000,
        }
    }

    pub fn from_fractions(fit: f64, trust: f64, risk: f64, urgency: f64) -> Self {
        RuleCoefficients {
            fit_micro: crate::fixed::to_micro(fit),
            trust_micro: crate::fixed::to_micro(trust),
            risk_micro: crate::fixed::to_micro(risk),
            urgency_micro: crate::fixed::to_micro(urgency),
        }
    }

    fn as_array(&self) -> [i64; 4] {
        [self.fit_micro, self.trust_micro, self.risk_micro, self.urgency_micro]
    }
}

/// Governance dials: lambda (nonnegative gain) and kappa (nonnegative
/// cap as a fraction of budget), both micro fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GovernancePoint {
    pub lambda_micro: i64,
    pub kappa_micro: i64,
}

impl GovernancePoint {
    /// Deployed Round-20 point (lambda=1, kappa=0.05).
    pub fn deployed() -> Self {
        GovernancePoint { lambda_micro: MICRO, kappa_micro: 50_000 }
    }

    pub fn new(lambda: f64, kappa: f64) -> Self {
        GovernancePoint {
            lambda_micro: crate::fixed::to_micro(lambda),
            kappa_micro: crate::fixed::to_micro(kappa),
        }
    }

    pub fn lambda(&self) -> f64 {
        crate::fixed::from_micro(self.lambda_micro)
    }

    pub fn kappa(&self) -> f64 {
        crate::fixed::from_micro(self.kappa_micro)
    }
}

/// Deployed hard floor: reject outright when u - p < -0.10 * budget.
pub const DEPLOYED_FLOOR_MICRO: i64 = -100_000;

/// Economic inputs of one accept/reject decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EconomicState {
    pub utility_cents: Cents,
    pub price_cents: Cents,
    pub budget_cents: Cents,
    pub tau_micro: i64,
    pub floor_micro: i64,
}

impl EconomicState {
    pub fn surplus_cents(&self) -> Cents {
        self.utility_cents - self.price_cents
    }
}

/// Dot product c . phi in 1e-12 scale.
fn dot_pico(phi: &PerceptionVector, c: &RuleCoefficients) -> i128 {
    let p = phi.to_micro();
    let w = c.as_array();
    p.iter().zip(w.iter()).map(|(&a, &b)| a as i128 * b as i128).sum()
}

/// Raw (unclipped) adjustment numerator at 1e-18 scale relative to cents.
fn raw_adjustment_atto(
    phi: &PerceptionVector,
    c: &RuleCoefficients,
    g: &GovernancePoint,
    budget_cents: Cents,
) -> i128 {
    g.lambda_micro as i128 * dot_pico(phi, c) * budget_cents as i128
}

/// Clipped adjustment at 1e-18 scale relative to cents.
fn clipped_adjustment_atto(
    phi: &PerceptionVector,
    c: &RuleCoefficients,
    g: &GovernancePoint,
    budget_cents: Cents,
) -> i128 {
    let raw = raw_adjustment_atto(phi, c, g, budget_cents);
    let bound = g.kappa_micro as i128 * budget_cents as i128 * 1_000_000_000_000i128;
    raw.clamp(-bound, bound)
}

/// clip(lambda * (c . phi) * b, [-kappa*b, +kappa*b]), rounded to cents.
/// The magnitude never exceeds kappa * b.
pub fn message_adjustment(
    phi: &PerceptionVector,
    c: &RuleCoefficients,
    g: &GovernancePoint,
    budget_cents: Cents,
) -> Cents {
    let atto = clipped_adjustment_atto(phi, c, g, budget_cents);
    div_round(atto, 1_000_000_000_000_000_000i128) as Cents
}

/// The decision rule. Hard floor first: u - p < floor * b rejects
/// regardless of phi, lambda, kappa. Otherwise accept iff
/// (u - p) + clip(lambda * (c . phi) * b, [+-kappa*b]) >= tau * b,
/// boundary inclusive. Exact integer arithmetic throughout.
pub fn accept(
    phi: &PerceptionVector,
    s: &EconomicState,
    c: &RuleCoefficients,
    g: &GovernancePoint,
) -> bool {
    let surplus = s.surplus_cents() as i128;
    // floor: surplus < floor_micro * b / 1e6
    if surplus * (MICRO as i128) < s.floor_micro as i128 * s.budget_cents as i128 {
        return false;
    }
    let adj_atto = clipped_adjustment_atto(phi, c, g, s.budget_cents);
    let lhs = surplus * 1_000_000_000_000_000_000i128 + adj_atto;
    let rhs = s.tau_micro as i128 * s.budget_cents as i128 * 1_000_000_000_000i128;
    lhs >= rhs
}

/// Coefficient vector with the named channel zeroed, others untouched.
pub fn zero_coefficient(c: &RuleCoefficients, channel: Channel) -> RuleCoefficients {
    let mut out = *c;
    match channel {
        Channel::Fit => out.fit_micro = 0,
        Channel::Trust => out.trust_micro = 0,
        Channel::Risk => out.risk_micro = 0,
        Channel::Urgency => out.urgency_micro = 0,
    }
    out
}

/// True iff |lambda * (c . phi)| > kappa (strict inequality).
pub fn clip_binds(phi: &PerceptionVector, c: &RuleCoefficients, g: &GovernancePoint) -> bool {
    let lhs = (g.lambda_micro as i128 * dot_pico(phi, c)).abs();
    let rhs = g.kappa_micro as i128 * 1_000_000_000_000i128;
    lhs > rhs
}
